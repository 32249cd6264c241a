"""
Terminal formatting of benchmark reports, evaluations and model summaries.

These helpers only build strings; the command handlers decide where they go.
"""

from typing import List

import numpy as np

from HybridAdvection.constants import N_HIDDEN_LAYERS
from HybridAdvection.models import BenchReport, DatasetSplits, EvalReport
from HybridAdvection.neural import ModelBundle, parameter_count


def format_bench_reports(method: str, reports: List[BenchReport]) -> str:
    """
    Format benchmark reports as a fixed-width table.

    Args:
        method: Pipeline name shown in the title
        reports: Reports in run order

    Returns:
        str: Table with one row per report
    """
    if not reports:
        return "No reports available."

    text = f"{method} benchmark\n"
    text += (
        f"{'label':<16}{'time':>10}{'MAE':>12}{'Linf':>12}"
        f"{'area':>14}{'loss %':>10}{'wall s':>9}\n"
    )
    for r in reports:
        text += (
            f"{r.label:<16}{r.time:>10.4f}{r.mae:>12.4e}{r.linf:>12.4e}"
            f"{r.area:>14.6e}{r.area_loss_pct:>10.3f}{r.wall_time_s:>9.1f}"
        )
        if r.vanished:
            text += "  (vanished)"
        text += "\n"
    return text


def format_eval_comparison(model: EvalReport, baseline: EvalReport) -> str:
    """
    Format test-split errors of the trained model next to the numerical estimate.

    Returns:
        str: Two-row table plus the MAE reduction factor
    """
    text = f"{'':<12}{'MAE':>12}{'Linf':>12}{'RMSE':>12}\n"
    for name, r in (("numerical", baseline), ("neural", model)):
        text += f"{name:<12}{r.mae:>12.4e}{r.linf:>12.4e}{r.rmse:>12.4e}\n"
    if model.mae > 0:
        text += f"MAE reduction: {baseline.mae / model.mae:.2f}x\n"
    return text


def format_split_summary(splits: DatasetSplits) -> str:
    text = (
        f"train {len(splits.train):,} / test {len(splits.test):,} / "
        f"validation {len(splits.validation):,} (discarded {splits.discarded:,})"
    )
    if splits.merged_bins:
        text += f"\nmerged sparse target bins: {splits.merged_bins}"
    return text


def format_model_summary(bundle: ModelBundle) -> str:
    """
    Describe a model bundle: architecture, parameter count, statistics and PCA spectrum.

    Returns:
        str: Multi-line summary
    """
    n_in = bundle.model.n_in
    hidden = bundle.model.hidden_units
    count = parameter_count(n_in, hidden)
    text = "Architecture\n"
    text += f"  inputs {n_in}, {N_HIDDEN_LAYERS} hidden ReLU layers of {hidden}, linear output\n"
    text += (
        f"  parameters: {count:,} = ({n_in}+1)*{hidden} + "
        f"{N_HIDDEN_LAYERS - 1}*({hidden}+1)*{hidden} + ({hidden}+1)\n"
    )
    text += f"Training resolution: l_max {bundle.l_max}, h {bundle.h:g}\n"

    text += "Feature groups (mean, sigma)\n"
    stats = bundle.stats
    for group in stats.means:
        text += f"  {group:<8}{stats.means[group]:>14.6e}{stats.sigmas[group]:>14.6e}\n"

    eigenvalues = bundle.pca.eigenvalues
    ratio = eigenvalues / np.sum(eigenvalues)
    text += f"PCA spectrum ({bundle.pca.n_components} components)\n"
    for k, (value, share) in enumerate(zip(eigenvalues, ratio), 1):
        text += f"  {k:>3}{value:>14.6e}{share:>9.2%}{np.sum(ratio[:k]):>9.2%}\n"
    return text
