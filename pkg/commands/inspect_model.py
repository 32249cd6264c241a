"""
inspect-model: print what a saved model contains.
"""

import argparse

from HybridAdvection.neural import load_model
from utils.report_helpers import format_model_summary


def run(args: argparse.Namespace) -> int:
    print(format_model_summary(load_model(args.path)))
    return 0


def setup(subparsers) -> None:
    """
    Register the inspect-model subcommand.

    Args:
        subparsers: Subparser collection of the main parser
    """
    parser = subparsers.add_parser(
        "inspect-model", help="Show architecture, statistics and PCA spectrum of a model."
    )
    parser.add_argument("path", help="Model JSON path")
    parser.set_defaults(handler=run)
