"""Application entry point for the backseat simulator."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from art import tprint
from rich.console import Console

import runner
import settings
from adapters.result_formatting import paired_table, run_table, sweep_table
from adapters.scenario_file import load_scenario, load_sweep
from core.config import TRANSPORT_VARIANTS, ConfigError

NAME = "BACKSEAT"
FONT = "tarty-1"

EXIT_OK = 0
EXIT_IO_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _print_banner() -> None:
    tprint(NAME, FONT, space=1)


def _configure_logging() -> None:
    config = settings.LOGGING or {}
    if not config.get("enabled", False):
        return

    level_name = str(config.get("level", "INFO")).upper()
    level = getattr(logging, level_name, logging.INFO)

    fmt = "%(asctime)s %(levelname)s %(name)s [%(run_context)s]: %(message)s"
    datefmt = "%Y-%m-%d %H:%M:%S"
    formatter = logging.Formatter(fmt=fmt, datefmt=datefmt)
    context_filter = runner.RunContextFilter()

    handlers: list[logging.Handler] = []

    if config.get("console", True):
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        console_handler.addFilter(context_filter)
        handlers.append(console_handler)

    file_cfg = config.get("file", {})
    if file_cfg.get("enabled", False):
        path = file_cfg.get("path", "logs/backseat.log")
        if not os.path.isabs(path):
            path = os.path.join(settings.PROJECT_ROOT, path)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        max_bytes = int(file_cfg.get("max_bytes", 5 * 1024 * 1024))
        backup_count = int(file_cfg.get("backup_count", 5))
        file_handler = RotatingFileHandler(
            path,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding="utf-8",
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        file_handler.addFilter(context_filter)
        handlers.append(file_handler)

    if not handlers:
        return

    logging.basicConfig(level=level, handlers=handlers)


def _search_dirs(config_path: str) -> list[str]:
    # Relative CDF paths resolve next to the scenario first.
    return [os.path.dirname(os.path.abspath(config_path)), *settings.CDF_SEARCH_DIRS]


def _out_dir(value: Optional[str]) -> Path:
    return Path(value or settings.OUTPUT_DIR)


def _run(args: argparse.Namespace, console: Console) -> None:
    config = load_scenario(args.config)
    seed = args.seed if args.seed is not None else runner.default_seed(config)
    summary, files = runner.run(config, seed, _out_dir(args.out), search_dirs=_search_dirs(args.config))
    console.print(run_table(summary))
    logging.getLogger(__name__).info("Wrote %s files", len(files))


def _paired(args: argparse.Namespace, console: Console) -> None:
    config = load_scenario(args.config)
    seed = args.seed if args.seed is not None else runner.default_seed(config)
    paired, files = runner.run_paired(
        config,
        seed,
        _out_dir(args.out),
        candidate=args.candidate,
        search_dirs=_search_dirs(args.config),
    )
    console.print(paired_table(paired))
    logging.getLogger(__name__).info("Wrote %s files", len(files))


def _sweep(args: argparse.Namespace, console: Console) -> None:
    spec = load_sweep(args.spec)
    workers = args.workers if args.workers is not None else settings.SWEEP_WORKERS
    rows = runner.sweep(spec, _out_dir(args.out), workers=workers, search_dirs=_search_dirs(args.spec))
    console.print(sweep_table(rows))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backseat")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run one scenario for one seed")
    run_parser.add_argument("config", help="Scenario JSON file")
    run_parser.add_argument("--seed", type=int, help="Seed (default: first seed in the scenario)")
    run_parser.add_argument("--out", help="Output directory")

    paired_parser = subparsers.add_parser(
        "paired",
        help="Run one trace with the candidate and with Near-Opt at the low-priority class",
    )
    paired_parser.add_argument("config", help="Scenario JSON file")
    paired_parser.add_argument("--seed", type=int, help="Seed (default: first seed in the scenario)")
    paired_parser.add_argument("--out", help="Output directory")
    paired_parser.add_argument("--candidate", choices=TRANSPORT_VARIANTS, help="Low-priority transport to evaluate")

    sweep_parser = subparsers.add_parser("sweep", help="Run every grid point of a sweep spec")
    sweep_parser.add_argument("spec", help="Sweep JSON file")
    sweep_parser.add_argument("--out", help="Output directory")
    sweep_parser.add_argument("--workers", type=int, help="Worker processes")

    validate_parser = subparsers.add_parser("validate", help="Check a scenario and print its normalized form")
    validate_parser.add_argument("config", help="Scenario JSON file")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    console = Console()

    if args.command != "validate":
        _print_banner()
    _configure_logging()

    try:
        if args.command == "validate":
            sys.stdout.write(runner.validate(args.config))
        elif args.command == "run":
            _run(args, console)
        elif args.command == "paired":
            _paired(args, console)
        else:
            _sweep(args, console)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"error: {violation}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as exc:
        print(f"error: cannot write results: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
