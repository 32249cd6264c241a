"""
train: fit preprocessing and the error-correcting network on a dataset.
"""

import argparse
import logging
import os

from config.settings import GenerationConfig, TrainConfig, get_config
from HybridAdvection.dataset import load_dataset, stratified_split
from HybridAdvection.neural import (
    evaluate,
    evaluate_baseline,
    fit_bundle,
    save_model,
    split_inputs,
)
from HybridAdvection.plots import plot_training_curves
from utils.report_helpers import format_eval_comparison, format_split_summary

logger = logging.getLogger(__name__)


def run(args: argparse.Namespace) -> int:
    """
    Train on args.dataset and write the model, the training log and its plot.

    The coarse resolution of the generation settings fixes the mesh size the
    model is valid for.

    Returns:
        int: Process exit code
    """
    settings = get_config(args.config)
    generation = GenerationConfig.load_from_env(args.config)
    config = TrainConfig.load_from_env(args.config)
    out = args.out or os.path.join(settings.output_dir, "model.json")
    out_dir = os.path.dirname(os.path.abspath(out))
    os.makedirs(out_dir, exist_ok=True)

    tuples = load_dataset(args.dataset)
    splits = stratified_split(tuples, config.fractions, config.discard, config.bins, config.seed)
    print(format_split_summary(splits))

    bundle, log = fit_bundle(splits, generation.h_c, generation.l_c_max, config)
    save_model(out, bundle)
    log_path = os.path.join(out_dir, "training_log.csv")
    log.to_csv(log_path, index=False, float_format="%.17g")
    plot_training_curves(log, os.path.join(out_dir, "training_curves.svg"))
    logger.info("trained for %d epoch(s)", len(log))

    if len(splits.test):
        test = split_inputs(splits.test, bundle.stats, bundle.pca, bundle.h)
        print(format_eval_comparison(evaluate(bundle.model, test), evaluate_baseline(test)))
    print(f"Model written to {out}, log to {log_path}")
    return 0


def setup(subparsers) -> None:
    """
    Register the train subcommand.

    Args:
        subparsers: Subparser collection of the main parser
    """
    parser = subparsers.add_parser("train", help="Train the correction network on a dataset.")
    parser.add_argument("dataset", help="Dataset CSV written by gen-data")
    parser.add_argument("--out", help="Model JSON path (default: <output_dir>/model.json)")
    parser.set_defaults(handler=run)
