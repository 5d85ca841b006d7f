"""
Command-line entry point.

    prospect-bench run --config CONFIG [--out DIR] [--plot] [--seed-offset K]
    prospect-bench solve-ref --config CONFIG [--seed-offset K]

Exit codes: 0 success, 1 configuration error, 2 data error (including unreadable
inputs and unwritable outputs), 3 solver failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from core import constants as const
from core.errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateError,
    NumericalError,
    ParameterError,
    SizeError,
)

from .config import parse_config
from .runner import run_experiment, solve_reference

logger = logging.getLogger("bench")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prospect-bench",
        description="Benchmark stochastic optimizers on spectral risk objectives.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run every optimizer and seed of a config")
    run.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
    run.add_argument("--out", type=Path, default=None, help="output directory (overrides output_dir)")
    run.add_argument("--plot", action="store_true", help="also write suboptimality.svg")
    run.add_argument("--seed-offset", type=int, default=0, help="add K to every seed")

    ref = commands.add_parser("solve-ref", help="solve for the reference minimizer only")
    ref.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
    ref.add_argument("--seed-offset", type=int, default=0, help="add K to every seed")
    return parser


def _execute(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    if args.seed_offset:
        cfg = cfg.with_seed_offset(args.seed_offset)

    if args.command == "solve-ref":
        reference = solve_reference(cfg)
        print(reference.model_dump_json(indent=2))
        return const.EXIT_OK

    records = run_experiment(cfg, out_dir=args.out, plot=args.plot or None)
    diverged = [f"{r.optimizer}/{r.seed}" for r in records if r.status == "diverged"]
    if diverged:
        logger.warning("Diverged runs: %s", ", ".join(diverged))
    logger.info("Wrote %d trajectories to %s", len(records), args.out or cfg.output_dir)
    return const.EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        return _execute(args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return const.EXIT_CONFIG_ERROR
    except (DataError, SizeError) as e:
        logger.error("Data error: %s", e)
        return const.EXIT_DATA_ERROR
    except ParameterError as e:
        logger.error("Configuration error: %s", e)
        return const.EXIT_CONFIG_ERROR
    except (ConvergenceError, DegenerateError, NumericalError) as e:
        logger.error("Solver failure: %s", e)
        return const.EXIT_SOLVER_FAILURE
    except OSError as e:
        logger.error("I/O error: %s", e)
        return const.EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
