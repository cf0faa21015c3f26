"""Builds task streams from a RunConfig and runs the requested arms."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bench import Dataset, RunReport, TaskStream, gen_permuted_tasks, gen_split_tasks, \
    gen_synth_gaussian_tasks, run_arm
from .config import RunConfig
from .data import load_digits_base, load_idx, split_dataset
from .results import SummaryRow, matrix_path, write_acc_matrix, write_summary

log = logging.getLogger(__name__)

BASE_SPLIT_SEED = 0


def load_base(config: RunConfig) -> Dataset:
    """IDX files when configured, otherwise the bundled 8x8 digits."""
    if config.images_path is None:
        return load_digits_base(config.test_fraction, BASE_SPLIT_SEED, config.limit)
    train = load_idx(config.images_path, config.labels_path, config.limit, config.downsample)
    if config.test_images_path is None:
        return split_dataset(train.images, train.labels, config.test_fraction, BASE_SPLIT_SEED)
    test = load_idx(config.test_images_path, config.test_labels_path, config.limit, config.downsample)
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1
    return Dataset(train.images, train.labels, test.images, test.labels, n_classes)


def build_stream(config: RunConfig, seed: int, base: Dataset | None = None) -> TaskStream:
    if config.stream == "synthetic":
        return gen_synth_gaussian_tasks(config.tasks, config.synth_dim, config.synth_classes,
                                        config.synth_train, config.synth_test, seed, config.synth_noise)
    base = base if base is not None else load_base(config)
    if config.stream == "split":
        return gen_split_tasks(base, config.tasks)
    return gen_permuted_tasks(base, config.tasks, seed)


def run_seed(config: RunConfig, seed: int, base: Dataset | None = None,
             parallel_arms: bool = False) -> dict[str, RunReport]:
    stream = build_stream(config, seed, base)
    spec = config.network_spec(stream.input_dim, stream.n_classes, seed)
    train = config.train_config()

    def one(arm):
        return run_arm(arm, spec, stream, train, config.alpha, config.baseline_fel)

    if parallel_arms and len(config.arms) > 1:
        with ThreadPoolExecutor(max_workers=len(config.arms)) as pool:
            reports = list(pool.map(one, config.arms))
    else:
        reports = [one(arm) for arm in config.arms]
    return dict(zip(config.arms, reports))


def run_experiment(config: RunConfig, parallel_arms: bool = False) -> list[SummaryRow]:
    """Run every (seed, arm) pair and write the CSV outputs under config.output_dir."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = None if config.stream == "synthetic" else load_base(config)
    rows = []
    for seed in config.seeds:
        for arm, report in run_seed(config, seed, base, parallel_arms).items():
            log.info("seed %d %s: acc=%.4f bwt=%.4f (%.1fs)", seed, arm, report.acc, report.bwt,
                     report.wall_time)
            write_acc_matrix(matrix_path(out, arm, seed), report.acc_matrix)
            rows.append(SummaryRow(arm, seed, report.acc, report.bwt, report.wall_time))
    write_summary(out / "summary.csv", rows)
    return rows
