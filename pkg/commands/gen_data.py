"""
gen-data: run the paired coarse/fine simulations and write the dataset CSV.
"""

import argparse
import dataclasses
import os

from config.settings import GenerationConfig, get_config
from HybridAdvection.dataset import generate_dataset, save_dataset
from HybridAdvection.manifest import ManifestManager


def run(args: argparse.Namespace) -> int:
    """
    Generate a dataset as configured and write it to args.out.

    Returns:
        int: Process exit code
    """
    settings = get_config(args.config)
    config = GenerationConfig.load_from_env(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)

    out = args.out or os.path.join(settings.output_dir, "dataset.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    manifest = None if args.no_manifest else ManifestManager(settings.manifest_path)

    tuples = generate_dataset(config, manifest)
    save_dataset(out, tuples)
    print(f"Wrote {len(tuples):,} tuples to {out}")
    print(f"  coarse h {config.h_c:g} (l_max {config.l_c_max})")
    print(f"  fine h {config.h_f:g} (l_max {config.l_f_max})")
    return 0


def setup(subparsers) -> None:
    """
    Register the gen-data subcommand.

    Args:
        subparsers: Subparser collection of the main parser
    """
    parser = subparsers.add_parser(
        "gen-data", help="Generate learning tuples from paired coarse/fine simulations."
    )
    parser.add_argument("--out", help="Dataset CSV path (default: <output_dir>/dataset.csv)")
    parser.add_argument("--seed", type=int, help="Override the generation seed")
    parser.add_argument("--workers", type=int, help="Process count for configurations")
    parser.add_argument(
        "--no-manifest", action="store_true", help="Do not record the run in the manifest"
    )
    parser.set_defaults(handler=run)
