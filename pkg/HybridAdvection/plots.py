"""
Figures for benchmark runs and training logs.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

AREA_COLUMNS = ["method", "time", "normalized_area"]


def plot_area_evolution(areas: pd.DataFrame, path: str, title: str = "Normalized area") -> str:
    """
    Plot enclosed area over time, one line per method.

    Args:
        areas (pd.DataFrame): Columns method, time and normalized_area
        path (str): Output SVG path
        title (str): Figure title

    Returns:
        str: The filename of the saved plot
    """
    missing = set(AREA_COLUMNS) - set(areas.columns)
    if missing:
        raise ValueError(f"area frame is missing column(s): {sorted(missing)}")
    sns.set_theme(style="whitegrid")
    plt.figure(figsize=(8, 5))
    sns.lineplot(x="time", y="normalized_area", hue="method", data=areas)
    plt.axhline(1.0, color="black", linestyle=":", linewidth=1)
    plt.title(title)
    plt.xlabel("t")
    plt.ylabel("area / reference area")
    plt.tight_layout()
    plt.savefig(path, format="svg")
    plt.close()
    return path


def plot_training_curves(log: pd.DataFrame, path: str) -> str:
    """
    Plot train RMSE, validation MAE and learning rate per epoch.

    Returns:
        str: The filename of the saved plot
    """
    sns.set_theme(style="whitegrid")
    fig, (errors, rates) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    long = log.melt(id_vars="epoch", value_vars=["train_rmse", "val_mae"], var_name="metric")
    sns.lineplot(x="epoch", y="value", hue="metric", data=long, ax=errors)
    errors.set_yscale("log")
    errors.set_ylabel("error (h units)")
    sns.lineplot(x="epoch", y="lr", data=log, ax=rates)
    rates.set_yscale("log")
    rates.set_ylabel("learning rate")
    fig.suptitle("Training curves")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
