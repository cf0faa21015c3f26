"""`rgo` command line: run experiments, verify the math, report results."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config
from .experiment import run_experiment
from .results import ReportMismatch, aggregate, cross_check, format_table
from .verify import run_verify

log = logging.getLogger("rgo")


def cmd_run(config: RunConfig, parallel_arms: bool = False) -> int:
    try:
        rows = run_experiment(config, parallel_arms=parallel_arms)
    except Exception as exc:  # any failed arm fails the run
        log.error("run failed: %s", exc)
        return 1
    print(f"{'arm':<6}{'seed':>6}{'acc':>10}{'bwt':>10}{'time (s)':>10}")
    for r in rows:
        print(f"{r.arm:<6}{r.seed:>6}{r.acc:>10.4f}{r.bwt:>10.4f}{r.wall_time:>10.2f}")
    print(f"results written to {config.output_dir}")
    return 0


def cmd_verify() -> int:
    status, _ = run_verify()
    return status


def cmd_report(directory) -> int:
    try:
        rows = cross_check(directory)
    except (ReportMismatch, ValueError, FileNotFoundError) as exc:
        print(f"report failed: {exc}", file=sys.stderr)
        return 1
    print(format_table(aggregate(rows)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured experiment arms")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    run.add_argument("--limit", type=int, help="cap the number of dataset samples")
    run.add_argument("--downsample", action="store_true", help="average 2x2 pixel blocks of IDX images")
    run.add_argument("--out", type=Path, help="override output_dir")
    run.add_argument("--parallel-arms", action="store_true", help="run arms of a seed concurrently")

    sub.add_parser("verify", help="run the oracle suite")

    report = sub.add_parser("report", help="cross-check and summarize a results directory")
    report.add_argument("--dir", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "verify":
        return cmd_verify()
    if args.command == "report":
        return cmd_report(args.dir)

    try:
        config = parse_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seeds"] = (args.seed,)
        if args.limit is not None:
            overrides["limit"] = args.limit
        if args.downsample:
            overrides["downsample"] = True
        if args.out is not None:
            overrides["output_dir"] = args.out
        config = replace(config, **overrides)
        config.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return cmd_run(config, args.parallel_arms)


if __name__ == "__main__":
    sys.exit(main())
