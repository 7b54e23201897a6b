"""speechbt command line: reproducible pipeline stages plus reporting.

Exit codes: 0 ok, 2 every checkpoint gated out, 3 stage failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, SpeechBtError
from .pipeline import STAGE_BY_COMMAND, run_pipeline, run_single_stage

EXIT_OK = 0
EXIT_GATED = 2
EXIT_STAGE_FAILURE = 3
EXIT_CONFIG_ERROR = 4

STAGE_COMMANDS = list(STAGE_BY_COMMAND)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechbt",
        description="Quality-gated synthetic-speech training-data pipeline.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--run-dir", required=True, help="run directory")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument(
            "--workers", default=None, metavar="CMD",
            help="override [workers] command (worker launch line)",
        )

    for command in STAGE_COMMANDS:
        if command == "report":
            continue
        add_common(sub.add_parser(command, help=f"run only the {command} stage"))
    add_common(sub.add_parser("run", help="run every stage in order (resumable)"))

    report = sub.add_parser("report", help="emit CSV tables and SVG charts")
    report.add_argument("--config", default=None, help="run configuration file")
    report.add_argument("--run-dir", default=None, help="run directory to report on")
    report.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    report.add_argument("--workers", default=None, help=argparse.SUPPRESS)
    report.add_argument(
        "--import-hours", default=None, metavar="JSON",
        help="render an hours table (per-language real/synthetic hours JSON); "
        "use 'builtin' for the packaged 500K-hour statistics",
    )
    report.add_argument(
        "--scatter-csv", default=None, metavar="CSV",
        help="scatter chart from a CSV with norm_i and delta_wer columns",
    )
    report.add_argument(
        "--threshold", type=float, default=0.01,
        help="rule line position for the scatter chart",
    )
    report.add_argument("--out", default=None, help="output directory for imports")
    return parser


def _load(args) -> RunConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.workers is not None:
        config = replace(config, workers_command=args.workers)
    config.validate()
    return config


def _report_command(args) -> int:
    from .report import build_run_report, load_fixture_or_file, write_hours_report, write_scatter_report

    did_something = False
    out = Path(args.out) if args.out else None
    if args.import_hours is not None:
        source = None if args.import_hours == "builtin" else args.import_hours
        table = load_fixture_or_file(source)
        write_hours_report(out or Path("."), table)
        did_something = True
    if args.scatter_csv is not None:
        write_scatter_report(out or Path("."), args.scatter_csv, args.threshold)
        did_something = True
    if args.run_dir is not None:
        build_run_report(Path(args.run_dir))
        did_something = True
    if not did_something:
        raise ConfigError("report needs --run-dir, --import-hours, or --scatter-csv")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            return _report_command(args)
        config = _load(args)
        if args.command == "run":
            status = run_pipeline(config, args.run_dir)
        else:
            status = run_single_stage(args.command, config, args.run_dir)
        if status == "gated":
            print("status: gated (no checkpoint passed the quality gate)")
            return EXIT_GATED
        print("status: ok")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except SpeechBtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
