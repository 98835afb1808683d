"""Command-line entry point: run, aggregate, report, grid and fixtures subcommands."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .dataset import DataError
from .runner import ConfigError, aggregate, fmt_dist, load_config, run, write_report
from .sampling import binary_grid, multiclass_grid, shift_category

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.workers is not None:
        from dataclasses import replace
        config = replace(config, workers=args.workers)
    summary = run(config)
    print(f"wrote {summary.rows} rows to {summary.path} "
          f"({summary.skipped} skipped, {summary.errors} errors, {summary.resumed_units} units resumed)")
    return EXIT_PARTIAL if summary.skipped or summary.errors else EXIT_OK


def _print_report(report):
    width = max(len(m) for m in report.methods)
    print(f"{'method':<{width}}  avg_rank")
    for i in sorted(range(len(report.methods)), key=lambda i: report.average_ranks[i]):
        print(f"{report.methods[i]:<{width}}  {report.average_ranks[i]:.4f}")
    print(f"datasets: {len(report.datasets)}")
    print(f"friedman: {report.friedman_statistic:.4f} rejected={report.friedman_p_threshold_passed}")
    print(f"critical difference: {report.critical_difference:.4f}")
    for g in report.groups():
        print("group: " + ", ".join(g))


def _cmd_aggregate(args) -> int:
    report = aggregate(args.results, args.metric, args.shift, args.split)
    _print_report(report)
    return EXIT_OK


def _cmd_report(args) -> int:
    written = []
    for metric in ("ae", "nkld"):
        written += write_report(aggregate(args.results, metric), args.out)
    for p in written:
        print(p)
    return EXIT_OK


def _cmd_grid(args) -> int:
    if args.kind == "binary":
        specs, mode = binary_grid(), "binary"
    else:
        specs, mode = multiclass_grid(args.classes), "multiclass"
    if args.print:
        print("index,train_dist,test_dist,train_fraction,shift_category")
        for i, s in enumerate(specs):
            print(f"{i},{fmt_dist(s.train_dist)},{fmt_dist(s.test_dist)},{s.train_fraction!r},"
                  f"{shift_category(s.train_dist, s.test_dist, mode)}")
    else:
        print(len(specs))
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    from .oracles import regenerate_fixtures
    if not args.regen:
        print("nothing to do (pass --regen)")
        return EXIT_OK
    for p in regenerate_fixtures(args.out):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantbench", description="Quantification benchmark tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("aggregate", help="rank methods from a result file")
    p.add_argument("--results", required=True)
    p.add_argument("--metric", choices=("ae", "nkld"), default="ae")
    p.add_argument("--shift", choices=("minor", "medium", "major"))
    p.add_argument("--split", type=float)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("report", help="write markdown tables and CD-diagram data")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("grid", help="list the scenario grid")
    p.add_argument("--kind", choices=("binary", "multiclass"), default="binary")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--print", action="store_true")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("fixtures", help="regenerate golden oracle fixtures")
    p.add_argument("--regen", action="store_true")
    p.add_argument("--out", default=str(Path("tests") / "fixtures"))
    p.set_defaults(func=_cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
