# Imports
import argparse
import logging
import sys
from typing import List, Optional

from commands.bench import setup as setup_bench
from commands.gen_data import setup as setup_gen_data
from commands.inspect_model import setup as setup_inspect_model
from commands.train import setup as setup_train
from config.settings import get_config, reset_config

logger = logging.getLogger("hybrid_advection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybrid-advection",
        description="Neural-corrected semi-Lagrangian level-set advection on quadtrees.",
    )
    parser.add_argument("--config", help="Key=value config file (HA_* keys)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Set up command modules
    setup_gen_data(subparsers)
    setup_train(subparsers)
    setup_bench(subparsers)
    setup_inspect_model(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        # Settings follow --config, even if an earlier call cached others
        reset_config()
        settings = get_config(args.config)
    except ValueError as e:
        print(f"Error loading configuration: {e}", file=sys.stderr)
        return 1

    logging.basicConfig(
        level=settings.log_level, format="%(asctime)s - %(levelname)s - %(message)s"
    )
    try:
        return args.handler(args)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
