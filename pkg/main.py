#!/usr/bin/env python3
"""Command-line entry point for the RNS-CKKS toolkit."""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from loguru import logger

from controllers.run_controller import COMMANDS, VARIANTS, RunConfig, get_run_controller
from services.cost_model_service import PROFILES
from utils.constants import DEFAULT_SEED, LOGS_DIR, ensure_base_dirs
from utils.errors import CkksError
from utils.logging_config import configure_logging

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rns-ckks",
        description="RNS-CKKS kernels, H-(I)DFT schedules and bootstrapping cost model",
    )
    parser.add_argument("--log-level", default="INFO", help="loguru level for stderr and file")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--params", default="desk", help="built-in set name or JSON file")
        cmd.add_argument("--seed", type=int, default=DEFAULT_SEED)
        cmd.add_argument("--variant", choices=VARIANTS, default="baseline")
        cmd.add_argument("--profile", choices=sorted(PROFILES), default="ark")
        cmd.add_argument(
            "--out", type=Path, default=None, help="report file (keygen: output directory)"
        )
        cmd.add_argument("--n", dest="slots", type=int, default=None, help="slot count override")
        cmd.add_argument("--k", type=int, default=None, help="radix exponent of the merged DFT")

    sub.choices["selftest"].add_argument("--trials", type=int, default=64)
    sub.choices["selftest"].add_argument(
        "--fixture", type=Path, default=None, help="ciphertext artifact that must decrypt, under its .key secret, to its .pt plaintext"
    )
    sub.choices["hdft"].add_argument(
        "--analytic-only", action="store_true", help="skip the desk-scale execution"
    )
    sub.choices["bench"].add_argument("--repeats", type=int, default=3)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    ensure_base_dirs()
    log_file = configure_logging(LOGS_DIR, level=args.log_level)
    if log_file:
        logger.info(f"Writing logs to {log_file}")

    def global_exception_handler(exc_type, exc_value, exc_traceback):
        logger.error("=== UNCAUGHT EXCEPTION (GLOBAL) ===")
        logger.error(f"Exception type: {exc_type.__name__}")
        logger.error(f"Exception value: {exc_value}")
        logger.error("Traceback:")
        for line in traceback.format_tb(exc_traceback):
            logger.error(line.rstrip())
        logger.error("=== END UNCAUGHT EXCEPTION ===")

        sys.__excepthook__(exc_type, exc_value, exc_traceback)

    sys.excepthook = global_exception_handler

    try:
        config = RunConfig(
            command=args.command,
            params=args.params,
            seed=args.seed,
            variant=args.variant,
            profile=args.profile,
            out=args.out,
            analytic_only=getattr(args, "analytic_only", False),
            slots=args.slots,
            k=args.k,
            trials=getattr(args, "trials", 64),
            repeats=getattr(args, "repeats", 3),
            fixture=getattr(args, "fixture", None),
        )
        status, report = get_run_controller().run(config)
    except CkksError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR
    sys.stdout.write(report.render())
    return EXIT_CHECK_FAILED if status else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
