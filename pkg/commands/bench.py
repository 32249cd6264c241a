"""
bench: rotation and vortex benchmarks.
"""

import argparse
import dataclasses
import os

from config.settings import BenchConfig, get_config
from HybridAdvection.benchmarks import (
    HYBRID,
    METHODS,
    NUMERICAL,
    run_rotation,
    run_vortex,
    write_outputs,
)
from HybridAdvection.neural import load_model
from utils.report_helpers import format_bench_reports

TESTS = ("rotation", "vortex")


def _run(test: str, method: str, args: argparse.Namespace, config: BenchConfig, bundle):
    if test == "rotation":
        return run_rotation(method, args.lmax, config, bundle, diagnostics=args.diagnostics)
    return run_vortex(
        method, args.lmax, config, bundle, extended=args.extended, diagnostics=args.diagnostics
    )


def run(args: argparse.Namespace) -> int:
    """
    Run one benchmark and write its outputs to args.out.

    With --compare, a hybrid run is paired with a numerical run from the same
    initial state, whose files go to <out>/numerical.

    Returns:
        int: Process exit code
    """
    settings = get_config(args.config)
    config = BenchConfig.load_from_env(args.config)
    if args.revolutions is not None:
        config = dataclasses.replace(config, revolutions=args.revolutions)
    if args.method == HYBRID and not args.model:
        raise ValueError("--model is required for the hybrid method")
    bundle = load_model(args.model) if args.model else None
    out = args.out or os.path.join(settings.output_dir, f"{args.test}_{args.method}_l{args.lmax}")

    baseline = None
    if args.compare and args.method == HYBRID:
        baseline = _run(args.test, NUMERICAL, args, config, None)
        write_outputs(baseline, os.path.join(out, NUMERICAL))
        print(format_bench_reports(NUMERICAL, baseline.reports))

    result = _run(args.test, args.method, args, config, bundle)
    written = write_outputs(result, out, compare=baseline)
    print(format_bench_reports(args.method, result.reports))
    print(f"Wrote {len(written)} file(s) to {out}")
    return 0


def setup(subparsers) -> None:
    """
    Register the bench subcommand.

    Args:
        subparsers: Subparser collection of the main parser
    """
    parser = subparsers.add_parser("bench", help="Run the rotation or vortex benchmark.")
    parser.add_argument("test", choices=TESTS)
    parser.add_argument("--method", choices=METHODS, default=NUMERICAL)
    parser.add_argument("--lmax", type=int, default=6, help="Finest grid level")
    parser.add_argument("--model", help="Model JSON for the hybrid method")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--revolutions", type=int, help="Rotation revolutions")
    parser.add_argument(
        "--extended", action="store_true", help="Vortex reversal at t=1 (final time 2)"
    )
    parser.add_argument(
        "--diagnostics", action="store_true", help="Write per-step diagnostics.csv"
    )
    parser.add_argument(
        "--compare", action="store_true", help="Pair a hybrid run with a numerical one"
    )
    parser.set_defaults(handler=run)
