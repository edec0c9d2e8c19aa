#!/usr/bin/env python3
"""
Main entry point for the cnls laboratory.
Parses the command line, loads the experiment file and maps errors to exit codes.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

# Add the repository root to the path so `python src/main.py` works too
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import load_config
from src.errors import ConfigError, GateViolation, GridError, LabError, SolverError
from src.harness import COMMANDS

logger = logging.getLogger(__name__)

EXIT_CODES = {
    ConfigError: 1,
    GridError: 2,
    SolverError: 3,
    GateViolation: 4,
}


def exit_code_for(exc: BaseException) -> int:
    """Exit code of a failure; anything unmapped counts as a config error."""
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1


def build_parser() -> argparse.ArgumentParser:
    """The cnls argument parser."""
    parser = argparse.ArgumentParser(
        prog="cnls",
        description="Radial combined-nonlinearity NLS laboratory",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="experiment YAML file")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent simulations")
    parser.add_argument("--output", type=Path, default=None, help="override output_dir")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="%(message)s",
        level=logging.DEBUG if args.verbose else logging.INFO,
    )
    # numba's compiler logging is noise at DEBUG
    logging.getLogger("numba").setLevel(logging.WARNING)

    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        config = load_config(args.config)
        out = args.output if args.output is not None else Path(config.output_dir)
        return COMMANDS[args.command](config, out, args.jobs)
    except LabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exit_code_for(exc)
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
