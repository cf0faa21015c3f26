import csv
import math
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgo import cli
from rgo.bench import AccuracyMatrix, acc_bwt
from rgo.config import ConfigError, RunConfig, parse_config, parse_config_text
from rgo.data import IdxFormatError, load_idx, write_idx
from rgo.results import mean_std, read_acc_matrix, read_summary, write_acc_matrix
from rgo.verify import run_verify

FAST = """
stream = synthetic
tasks = 2
synth_dim = 8
synth_classes = 3
synth_train = 30
synth_test = 15
hidden = 6
steps_per_task = 20
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


# config

def test_empty_config_gives_defaults(tmp_path):
    config = parse_config(write_cfg(tmp_path, ""))
    assert config == RunConfig()
    assert (config.learning_rate, config.batch_size, config.alpha) == (0.1, 10, 1.0)


def test_config_values_and_comments():
    config = parse_config_text("learning_rate = 0.1  # MNIST default\n# comment\narms = rgo, sgd\nseeds = 3 4\n")
    assert config.learning_rate == 0.1
    assert config.arms == ("rgo", "sgd") and config.seeds == (3, 4)


@pytest.mark.parametrize("text, needle", [
    ("learning_rate = -1", "learning_rate"),
    ("batch_size = 0", "batch_size"),
    ("arms = rgo, adam", "arms"),
    ("stream = rotated", "stream"),
    ("images_path = /nonexistent/file\nlabels_path = /nonexistent/l", "images_path"),
])
def test_config_range_errors_name_the_key(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config_text(text)


@pytest.mark.parametrize("text, line", [
    ("tasks = 3\nbogus = 1", "line 2"),
    ("tasks = 3\n\nno equals sign", "line 3"),
    ("tasks = three", "line 1"),
    ("tasks = 1\ntasks = 2", "line 2"),
])
def test_config_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError, match=line):
        parse_config_text(text)


def test_config_dataset_paths_resolve_against_config_dir(tmp_path):
    write_idx(tmp_path / "img", tmp_path / "lab", np.zeros((2, 2, 2)), [0, 1])
    config = parse_config(write_cfg(tmp_path, "images_path = img\nlabels_path = lab\n"))
    assert config.images_path == tmp_path / "img"


# IDX

def test_idx_round_trip(tmp_path):
    images = np.array([[[0, 255], [128, 1]], [[7, 8], [9, 10]]], dtype=np.uint8)
    write_idx(tmp_path / "i", tmp_path / "l", images, [3, 9])
    data = load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(data.images, images.reshape(2, 4) / 255.0)
    assert data.images[0, 1] == 1.0
    assert data.labels.tolist() == [3, 9]
    assert load_idx(tmp_path / "i", tmp_path / "l", limit=1).labels.tolist() == [3]


def test_idx_magic_numbers(tmp_path):
    (tmp_path / "l").write_bytes(struct.pack(">2I", 0x801, 1) + b"\x02")
    (tmp_path / "i").write_bytes(struct.pack(">4I", 0x803, 1, 1, 1) + b"\x05")
    assert load_idx(tmp_path / "i", tmp_path / "l").labels.tolist() == [2]
    (tmp_path / "bad").write_bytes(struct.pack(">2I", 0x803, 1) + b"\x02")
    with pytest.raises(IdxFormatError, match="magic"):
        load_idx(tmp_path / "i", tmp_path / "bad")


def test_idx_truncated_and_mismatched(tmp_path):
    write_idx(tmp_path / "i", tmp_path / "l", np.zeros((3, 2, 2)), [0, 1, 2])
    (tmp_path / "short").write_bytes((tmp_path / "i").read_bytes()[:-1])
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(tmp_path / "short", tmp_path / "l")
    write_idx(tmp_path / "i2", tmp_path / "l2", np.zeros((2, 2, 2)), [0, 1])
    with pytest.raises(IdxFormatError, match="labels"):
        load_idx(tmp_path / "i", tmp_path / "l2")


def test_idx_downsample_averages_blocks(tmp_path):
    img = np.arange(16, dtype=np.uint8).reshape(1, 4, 4) * 10
    write_idx(tmp_path / "i", tmp_path / "l", img, [0])
    data = load_idx(tmp_path / "i", tmp_path / "l", downsample=True)
    expected = np.array([[0 + 10 + 40 + 50, 20 + 30 + 60 + 70], [80 + 90 + 120 + 130, 100 + 110 + 140 + 150]]) / 4
    np.testing.assert_allclose(data.images[0], expected.ravel() / 255.0)


# CSV

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6).flatmap(
    lambda T: st.tuples(*[st.lists(st.floats(0, 1), min_size=t + 1, max_size=t + 1) for t in range(T)])))
def test_acc_matrix_csv_round_trip(rows):
    R = AccuracyMatrix(rows)
    with tempfile.TemporaryDirectory() as tmp:
        write_acc_matrix(Path(tmp) / "m.csv", R)
        assert read_acc_matrix(Path(tmp) / "m.csv") == R


def test_acc_matrix_csv_layout(tmp_path):
    write_acc_matrix(tmp_path / "m.csv", AccuracyMatrix([[0.5], [0.25, 1.0]]))
    assert (tmp_path / "m.csv").read_text() == "after_task,task_1,task_2\n1,0.5,\n2,0.25,1\n"


# commands

def test_run_stl_single_task(tmp_path, capsys):
    cfg = write_cfg(tmp_path, FAST.replace("tasks = 2", "tasks = 1") + "arms = stl\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    rows = read_summary(tmp_path / "out" / "summary.csv")
    assert len(rows) == 1 and rows[0].arm == "stl" and rows[0].bwt == 0.0
    assert "stl" in capsys.readouterr().out


def test_run_is_byte_reproducible(tmp_path):
    cfg = write_cfg(tmp_path, FAST + "seeds = 1, 2\n")
    for out in ("a", "b"):
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    for seed in (1, 2):
        for arm in ("rgo", "sgd", "stl"):
            name = f"seed_{seed}/acc_matrix_{arm}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def strip_time(path):
        return [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]

    assert strip_time(tmp_path / "a" / "summary.csv") == strip_time(tmp_path / "b" / "summary.csv")


def test_seed_override_and_parallel_arms(tmp_path):
    cfg = write_cfg(tmp_path, FAST + "seeds = 1, 2\n")
    assert cli.main(["run", "--config", str(cfg), "--seed", "7", "--parallel-arms",
                     "--out", str(tmp_path / "p")]) == 0
    assert {r.seed for r in read_summary(tmp_path / "p" / "summary.csv")} == {7}
    assert cli.main(["run", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / "s")]) == 0
    for arm in ("rgo", "sgd", "stl"):
        name = f"seed_7/acc_matrix_{arm}.csv"
        assert (tmp_path / "p" / name).read_bytes() == (tmp_path / "s" / name).read_bytes()


def test_run_with_idx_dataset(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.arange(60) % 4
    images = (rng.uniform(0, 60, (60, 4, 4)) + labels[:, None, None] * 40).astype(np.uint8)
    write_idx(tmp_path / "img", tmp_path / "lab", images, labels)
    cfg = write_cfg(tmp_path, "images_path = img\nlabels_path = lab\nstream = split\ntasks = 2\n"
                              "hidden = 8\nsteps_per_task = 30\n")
    assert cli.main(["run", "--config", str(cfg), "--downsample", "--out", str(tmp_path / "o")]) == 0
    assert len(read_summary(tmp_path / "o" / "summary.csv")) == 3


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "learning_rate = -1\n")
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_report_single_run(tmp_path, capsys):
    cfg = write_cfg(tmp_path, FAST + "arms = sgd\n")
    cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    assert cli.main(["report", "--dir", str(tmp_path / "o")]) == 0
    table = capsys.readouterr().out.splitlines()
    assert len(table) == 2 and table[1].startswith("sgd") and "±0.00" in table[1]


def test_report_detects_tampering(tmp_path, capsys):
    cfg = write_cfg(tmp_path, FAST)
    cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    summary = tmp_path / "o" / "summary.csv"
    rows = list(csv.reader(summary.open()))
    rows[1][2] = str(float(rows[1][2]) + 0.01)
    with summary.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    assert cli.main(["report", "--dir", str(tmp_path / "o")]) == 1
    assert "summary acc" in capsys.readouterr().err


def test_report_std_matches_loop_oracle(tmp_path, capsys):
    cfg = write_cfg(tmp_path, FAST + "seeds = 0, 1\narms = rgo\n")
    cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    accs = [r.acc for r in read_summary(tmp_path / "o" / "summary.csv")]
    mean = (accs[0] + accs[1]) / 2
    std = math.sqrt(((accs[0] - mean) ** 2 + (accs[1] - mean) ** 2) / 2)
    m, s = mean_std(accs)
    assert abs(m - mean) < 1e-12 and abs(s - std) < 1e-12
    capsys.readouterr()
    assert cli.main(["report", "--dir", str(tmp_path / "o")]) == 0
    assert f"{100 * mean:.2f}±{100 * std:.2f}" in capsys.readouterr().out


def test_summary_matches_matrices(tmp_path):
    cfg = write_cfg(tmp_path, FAST)
    cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    for row in read_summary(tmp_path / "o" / "summary.csv"):
        R = read_acc_matrix(tmp_path / "o" / f"seed_{row.seed}" / f"acc_matrix_{row.arm}.csv")
        assert acc_bwt(R) == (row.acc, row.bwt)


def test_verify_fault_injection_names_symmetry_check(capsys):
    status, results = run_verify(fault="symmetry")
    assert status == 1
    failed = [r.name for r in results if not r.passed]
    assert failed == ["opt: projectors stay symmetric over 1000 updates"]
    assert "FAILED: opt: projectors stay symmetric" in capsys.readouterr().out
