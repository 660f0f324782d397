"""Command-line interface: ``run``, ``eigs`` and ``gen-coeff``."""

import argparse
import copy
import logging
from pathlib import Path
from typing import Optional

from src.cli.config import ExperimentConfig, load_config, parse_config
from src.cli.runner import dump_eigs, gen_coeff, run
from src.data.presets import PRESETS
from src.errors import ConfigError, SolverError
from src.settings import Settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NOT_CONVERGED = 2


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="experiment config (JSON)")
    common.add_argument("--preset", choices=sorted(PRESETS), help="use a committed preset instead of a config file")
    common.add_argument("--jobs", type=int, default=settings.jobs, help="sweep points computed concurrently")
    common.add_argument("--out", type=Path, default=settings.out_dir, help="output directory")

    parser = argparse.ArgumentParser(prog="hcdd", description="High-contrast domain decomposition experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("run", parents=[common], help="run PCG for every method and sweep point")
    commands.add_parser("eigs", parents=[common], help="write per-region local eigenvalues")
    commands.add_parser("gen-coeff", parents=[common], help="write the coefficient fields as CSV")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.preset and args.config:
        raise ConfigError("give either a config file or --preset, not both")
    if args.preset:
        return parse_config(copy.deepcopy(PRESETS[args.preset]))
    if not args.config:
        raise ConfigError("a config file or --preset is required")
    return load_config(args.config)


def main(argv: Optional[list[str]] = None, settings: Optional[Settings] = None) -> int:
    """Run a subcommand and return its exit code."""
    settings = settings or Settings.from_env()
    args = build_parser(settings).parse_args(argv)
    try:
        config = resolve_config(args)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        print(f"config error: {exc}")
        return EXIT_CONFIG_ERROR

    if args.command in ("eigs", "gen-coeff"):
        write = dump_eigs if args.command == "eigs" else gen_coeff
        try:
            paths = write(config, args.out)
        except (SolverError, OSError) as exc:
            logger.error("%s failed: %s", args.command, exc)
            print(f"error: {exc}")
            return EXIT_CONFIG_ERROR
        for path in paths:
            print(path)
        return EXIT_OK

    result = run(config, args.out, jobs=args.jobs)
    print(f"wrote {result.csv_path} and {result.json_path}")
    if not result.all_converged:
        failed = [row.method for row in result.rows if not row.converged]
        print(f"{len(failed)} of {len(result.rows)} solves did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK
