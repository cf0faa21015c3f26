"""CSV outputs of a run and the cross-seed report."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .bench import AccuracyMatrix, acc_bwt

SUMMARY_FIELDS = ("arm", "seed", "acc", "bwt", "wall_time")
CROSS_CHECK_TOL = 1e-9


def fmt(value: float) -> str:
    return format(value, ".17g")


def matrix_path(out_dir, arm: str, seed: int) -> Path:
    return Path(out_dir) / f"seed_{seed}" / f"acc_matrix_{arm}.csv"


def write_acc_matrix(path, R: AccuracyMatrix) -> None:
    """Rows are 'after task T', columns task k; cells above the diagonal stay empty."""
    T = R.n_tasks
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["after_task"] + [f"task_{k + 1}" for k in range(T)])
        for t, row in enumerate(R.rows):
            writer.writerow([t + 1] + [fmt(v) for v in row] + [""] * (T - len(row)))


def read_acc_matrix(path) -> AccuracyMatrix:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "after_task":
        raise ValueError(f"{path}: missing header")
    R = AccuracyMatrix()
    for t, row in enumerate(rows[1:]):
        cells = row[1:]
        filled, empty = cells[:t + 1], cells[t + 1:]
        if any(c == "" for c in filled) or any(c != "" for c in empty):
            raise ValueError(f"{path}: row {t + 1} is not lower-triangular")
        R.append_row(float(c) for c in filled)
    R.validate()
    return R


@dataclass
class SummaryRow:
    arm: str
    seed: int
    acc: float
    bwt: float
    wall_time: float


def write_summary(path, rows: list[SummaryRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for r in rows:
            writer.writerow([r.arm, r.seed, fmt(r.acc), fmt(r.bwt), f"{r.wall_time:.3f}"])


def read_summary(path) -> list[SummaryRow]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(SUMMARY_FIELDS)}")
        return [SummaryRow(r["arm"], int(r["seed"]), float(r["acc"]), float(r["bwt"]),
                           float(r["wall_time"])) for r in reader]


def mean_std(values: list[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    n = len(values)
    mean = sum(values) / n
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / n)


@dataclass
class ArmStats:
    arm: str
    n_seeds: int
    acc_mean: float
    acc_std: float
    bwt_mean: float
    bwt_std: float


class ReportMismatch(ValueError):
    pass


def cross_check(out_dir) -> list[SummaryRow]:
    """Recompute ACC/BWT from every matrix and compare with summary.csv."""
    rows = read_summary(Path(out_dir) / "summary.csv")
    for r in rows:
        acc, bwt = acc_bwt(read_acc_matrix(matrix_path(out_dir, r.arm, r.seed)))
        if abs(acc - r.acc) > CROSS_CHECK_TOL or abs(bwt - r.bwt) > CROSS_CHECK_TOL:
            raise ReportMismatch(
                f"{r.arm} seed {r.seed}: summary acc={r.acc} bwt={r.bwt}, matrix gives acc={acc} bwt={bwt}")
    return rows


def aggregate(rows: list[SummaryRow]) -> list[ArmStats]:
    stats = []
    for arm in dict.fromkeys(r.arm for r in rows):
        mine = [r for r in rows if r.arm == arm]
        acc_m, acc_s = mean_std([r.acc for r in mine])
        bwt_m, bwt_s = mean_std([r.bwt for r in mine])
        stats.append(ArmStats(arm, len(mine), acc_m, acc_s, bwt_m, bwt_s))
    return stats


def format_table(stats: list[ArmStats]) -> str:
    lines = [f"{'arm':<6}{'seeds':>6}  {'ACC (%)':>16}  {'BWT (%)':>16}"]
    for s in stats:
        acc = f"{100 * s.acc_mean:.2f}±{100 * s.acc_std:.2f}"
        bwt = f"{100 * s.bwt_mean:.2f}±{100 * s.bwt_std:.2f}"
        lines.append(f"{s.arm:<6}{s.n_seeds:>6}  {acc:>16}  {bwt:>16}")
    return "\n".join(lines)
