"""
Command-line entry point: run configs, reproduce tables, demo family tilts.
"""

import argparse
import sys
from typing import List, Optional

import structlog

from ..core.config_loader import PRESETS, config_loader
from ..core.errors import ConfigError, ModelDomainError, NumericalFailure
from ..core.experiment_runner import ExecutionStatus, ExperimentRunner, rows_to_frame, write_report
from ..core.settings import get_settings
from ..evaluation.benchmark_tables import (
    BENCHMARK_IDS,
    DEFAULT_REFERENCE_FILE,
    check_table,
    load_reference,
    run_benchmark,
    run_tilt_demo,
)
from ..observability.logging import setup_logging
from ..observability.metrics import metrics_collector
from ..observability.tracing import setup_tracing
from ..tilting.registry import family_registry

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--threads", type=int, help="worker threads; changes wall time only")
    parser.add_argument("--out", help="report file; stdout when omitted")
    parser.add_argument("--format", choices=["csv", "tsv", "json"], help="report format")
    parser.add_argument("--metrics-out", help="write Prometheus metrics to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiltrisk", description="Sufficient exponential tilting for credit risk")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file, experiment id or preset")
    run.add_argument("--config", required=True, help=f"YAML path, id under config/experiments, or one of {PRESETS}")
    run.add_argument("--b1", type=int, help="pilot sample size")
    run.add_argument("--b2", type=int, help="estimation sample size")
    run.add_argument("--mode", choices=["crude", "is", "both"])
    _add_common(run)

    table = sub.add_parser("reproduce-table", help="reproduce one benchmark table")
    table.add_argument("table_id", type=int, help=f"one of {', '.join(map(str, BENCHMARK_IDS))}")
    table.add_argument("--b1", type=int)
    table.add_argument("--b2", type=int)
    table.add_argument("--reference", help="reference JSON to check the table against")
    table.add_argument("--no-grid", action="store_true", help="skip sensitivity grids (tables 7 and 8)")
    _add_common(table)

    fft = sub.add_parser("fft-check", help="alias of reproduce-table 4")
    fft.add_argument("--reference", help="reference JSON to check the table against")
    _add_common(fft)

    demo = sub.add_parser("tilt-demo", help="solve one catalog tilt and compare it with crude sampling")
    demo.add_argument("--family", required=True, choices=family_registry.list_families())
    demo.add_argument("--event", required=True, help="event kind, e.g. tail, sum, both, upper")
    demo.add_argument("--a", type=float, required=True, help="event threshold")
    demo.add_argument("--subset", help="comma-separated parameters to tilt, e.g. mu,sigma")
    demo.add_argument("--samples", type=int, default=10_000)
    demo.add_argument("--pilot-size", type=int, default=200_000)
    _add_common(demo)

    sub.add_parser("list", help="list presets, experiment configs, tables and families")
    return parser


def _emit(frame, args, default_format: str = "csv") -> None:
    text = write_report(frame, args.out, args.format or default_format)
    if args.out is None:
        sys.stdout.write(text)


def cmd_run(args, settings) -> int:
    runner = ExperimentRunner(threads=args.threads or settings.threads, chunk_size=settings.chunk_size)
    source = args.config
    config = None
    if source not in PRESETS:
        config = config_loader.load_run(source)
    result = runner.run(config or source, seed=args.seed, B1=args.b1, B2=args.b2, mode=args.mode)
    fmt = args.format or (config.output.format if config else "csv")
    out = args.out or (config.output.path if config else None)
    text = write_report(rows_to_frame(result.rows), out, fmt)
    if out is None:
        sys.stdout.write(text)
    if result.status == ExecutionStatus.FAILED:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_reproduce_table(args, settings, table_id: Optional[int] = None) -> int:
    table_id = args.table_id if table_id is None else table_id
    options = {}
    if getattr(args, "no_grid", False):
        options["grid"] = False
    table = run_benchmark(
        table_id,
        seed=args.seed,
        threads=args.threads or settings.threads,
        b1=getattr(args, "b1", None),
        b2=getattr(args, "b2", None),
        **options,
    )
    frame = table.frame.copy()
    frame.insert(1, "seed", table.seed)
    _emit(frame, args)
    for note in table.notes:
        print(f"note: {note}", file=sys.stderr)

    reference_path = args.reference or (DEFAULT_REFERENCE_FILE if DEFAULT_REFERENCE_FILE.exists() else None)
    if reference_path is None:
        return EXIT_OK
    checks = check_table(table, load_reference(reference_path))
    for check in checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.row}: {check.detail}", file=sys.stderr)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


def cmd_tilt_demo(args, settings) -> int:
    subset = [s.strip() for s in args.subset.split(",")] if args.subset else None
    frame = run_tilt_demo(
        args.family, args.event, args.a, subset,
        seed=args.seed or 0, samples=args.samples, pilot_size=args.pilot_size,
    )
    _emit(frame, args)
    return EXIT_OK if bool(frame["converged"].dropna().all()) else EXIT_NUMERICAL


def cmd_list(args, settings) -> int:
    print("presets:     " + ", ".join(PRESETS))
    print("experiments: " + ", ".join(config_loader.list_experiments()))
    print("tables:      " + ", ".join(map(str, BENCHMARK_IDS)))
    for name in family_registry.list_families():
        entry = family_registry.require(name)
        print(f"family {name}: events={','.join(entry.events)} subsets={','.join(entry.subsets)}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(settings.log_level, settings.log_format)
    setup_tracing(console=settings.tracing_console)

    handlers = {
        "run": cmd_run,
        "reproduce-table": cmd_reproduce_table,
        "fft-check": lambda a, s: cmd_reproduce_table(a, s, table_id=4),
        "tilt-demo": cmd_tilt_demo,
        "list": cmd_list,
    }
    try:
        code = handlers[args.command](args, settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelDomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    metrics_out = getattr(args, "metrics_out", None) or settings.metrics_path
    if metrics_out:
        metrics_collector.write_textfile(metrics_out)
    return code


if __name__ == "__main__":
    sys.exit(main())
