"""
The error-correcting network and its training loop.

The network is a plain ReLU multilayer perceptron whose scalar output is added
to the last input coordinate (the h-scaled numerical estimate phi_d), so it
only has to learn the error of the numerical scheme. Training runs in double
precision with Adam, plateau-driven learning-rate halving and early stopping.
"""

import copy
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd
import torch
from torch import nn
from torch.optim.lr_scheduler import ReduceLROnPlateau
from torch.utils.data import DataLoader, TensorDataset

from config.settings import TrainConfig
from HybridAdvection.constants import (
    MODEL_FORMAT_VERSION,
    N_HIDDEN_LAYERS,
    PACKET_SIZE,
)
from HybridAdvection.errors import ModelFormatError, TrainingError
from HybridAdvection.models import DatasetSplits, EvalReport, PcaModel, TrainingStats
from HybridAdvection.preprocess import build_inputs, fit

logger = logging.getLogger(__name__)

DTYPE = torch.float64
LOG_COLUMNS = ["epoch", "lr", "train_rmse", "val_mae"]


class MlpModel(nn.Module):
    """
    ReLU network predicting the numerical error, plus the skip addition.

    Args:
        n_in: Input width (principal components + 1)
        hidden_units: Width of every hidden layer
        seed: Seed of the weight initialization
    """

    def __init__(self, n_in: int, hidden_units: int, seed: int = 0):
        super().__init__()
        if n_in < 2:
            raise ValueError(f"n_in must be at least 2, got {n_in}")
        if hidden_units < 1:
            raise ValueError(f"hidden_units must be positive, got {hidden_units}")
        self.n_in = n_in
        self.hidden_units = hidden_units
        layers: List[nn.Module] = []
        width = n_in
        for _ in range(N_HIDDEN_LAYERS):
            layers += [nn.Linear(width, hidden_units, dtype=DTYPE), nn.ReLU()]
            width = hidden_units
        layers.append(nn.Linear(width, 1, dtype=DTYPE))
        self.error_net = nn.Sequential(*layers)

        generator = torch.Generator().manual_seed(seed)
        for layer in self.linear_layers():
            nn.init.kaiming_uniform_(layer.weight, nonlinearity="relu", generator=generator)
            nn.init.zeros_(layer.bias)

    def linear_layers(self) -> List[nn.Linear]:
        return [m for m in self.error_net if isinstance(m, nn.Linear)]

    def hidden_weights(self) -> List[torch.Tensor]:
        """Weight matrices of the ReLU layers (the L2-penalized ones)."""
        return [layer.weight for layer in self.linear_layers()[:N_HIDDEN_LAYERS]]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[-1]}")
        return self.error_net(x).squeeze(-1) + x[..., -1]


def parameter_count(n_in: int, hidden_units: int) -> int:
    """Trainable parameters: n_in*H + H + (L-1)(H^2 + H) + H + 1."""
    h = hidden_units
    return n_in * h + h + (N_HIDDEN_LAYERS - 1) * (h * h + h) + h + 1


def rmse_l2_loss(
    model: MlpModel, prediction: torch.Tensor, target: torch.Tensor, l2_factor: float
) -> torch.Tensor:
    """Root mean squared error plus l2_factor times the squared hidden weights."""
    rmse = torch.sqrt(torch.mean((prediction - target) ** 2))
    penalty = sum(torch.sum(w * w) for w in model.hidden_weights())
    return rmse + l2_factor * penalty


@dataclass(frozen=True, eq=False)
class TrainingSplit:
    """Network inputs and h-normalized targets of one dataset split."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have matching rows")

    def __len__(self) -> int:
        return int(self.targets.shape[0])


def predict(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Batch inference in double precision."""
    model.eval()
    with torch.no_grad():
        return model(torch.as_tensor(np.asarray(inputs, dtype=np.float64))).numpy()


def _report(prediction: np.ndarray, targets: np.ndarray) -> EvalReport:
    if targets.size == 0:
        raise ValueError("cannot evaluate an empty split")
    err = np.abs(prediction - targets)
    return EvalReport(
        mae=float(np.mean(err)),
        linf=float(np.max(err)),
        rmse=float(np.sqrt(np.mean(err * err))),
    )


def evaluate(model: MlpModel, split: TrainingSplit) -> EvalReport:
    """MAE, L-infinity and RMSE of the model on a split."""
    if len(split) == 0:
        raise ValueError("cannot evaluate an empty split")
    return _report(predict(model, split.inputs), split.targets)


def evaluate_baseline(split: TrainingSplit) -> EvalReport:
    """Errors of the uncorrected numerical estimate (prediction = phi_d / h)."""
    if len(split) == 0:
        raise ValueError("cannot evaluate an empty split")
    return _report(split.inputs[:, -1], split.targets)


def train(
    train_split: TrainingSplit, validation: TrainingSplit, config: TrainConfig
) -> Tuple[MlpModel, pd.DataFrame]:
    """
    Train a fresh network.

    Mini-batches of config.batch_size minimize RMSE plus the L2 penalty with
    Adam. The learning rate halves after config.lr_halving_patience epochs
    without validation-MAE improvement (never below config.lr_floor), and
    training stops after config.early_stop_patience such epochs or
    config.max_epochs. The returned weights are those of the best epoch.

    Args:
        train_split: Training inputs and targets
        validation: Validation inputs and targets
        config: Training hyper-parameters

    Returns:
        Tuple[MlpModel, pd.DataFrame]: Best model and the per-epoch log

    Raises:
        ValueError: If a split is empty
        TrainingError: If the loss becomes non-finite
    """
    if len(train_split) == 0 or len(validation) == 0:
        raise ValueError("training and validation splits must be non-empty")
    n_in = train_split.inputs.shape[1]
    model = MlpModel(n_in, config.hidden_units, seed=config.seed)
    loader = DataLoader(
        TensorDataset(
            torch.as_tensor(train_split.inputs, dtype=DTYPE),
            torch.as_tensor(train_split.targets, dtype=DTYPE),
        ),
        batch_size=config.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(config.seed),
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_init)
    scheduler = ReduceLROnPlateau(
        optimizer,
        mode="min",
        factor=0.5,
        patience=config.lr_halving_patience,
        threshold=0.0,
        min_lr=config.lr_floor,
    )

    best_mae = float("inf")
    best_state: Dict[str, Any] = copy.deepcopy(model.state_dict())
    stale = 0
    rows = []
    for epoch in range(1, config.max_epochs + 1):
        lr = optimizer.param_groups[0]["lr"]
        model.train()
        squared = 0.0
        for batch, (x, y) in enumerate(loader):
            optimizer.zero_grad()
            prediction = model(x)
            loss = rmse_l2_loss(model, prediction, y, config.l2_factor)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch}")
            loss.backward()
            optimizer.step()
            squared += float(torch.sum((prediction.detach() - y) ** 2))
        train_rmse = (squared / len(train_split)) ** 0.5
        val_mae = evaluate(model, validation).mae
        scheduler.step(val_mae)
        rows.append({"epoch": epoch, "lr": lr, "train_rmse": train_rmse, "val_mae": val_mae})

        if val_mae < best_mae:
            best_mae = val_mae
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
        if epoch % 10 == 0:
            logger.info(
                "epoch %d: lr=%.3g train_rmse=%.4e val_mae=%.4e", epoch, lr, train_rmse, val_mae
            )
        if stale >= config.early_stop_patience:
            logger.info("early stop at epoch %d, best val_mae=%.4e", epoch, best_mae)
            break

    model.load_state_dict(best_state)
    model.eval()
    return model, pd.DataFrame(rows, columns=LOG_COLUMNS)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """
    A trained network with the preprocessing it was trained behind.

    Attributes:
        model (MlpModel): The network
        stats (TrainingStats): Feature-group statistics
        pca (PcaModel): Principal axes and eigenvalues
        h (float): Mesh size of the training data
        l_max (int): Finest level of the training grids
    """

    model: MlpModel
    stats: TrainingStats
    pca: PcaModel
    h: float
    l_max: int

    def inputs(self, packets: np.ndarray) -> np.ndarray:
        return build_inputs(packets, self.stats, self.pca, self.h)

    def predict_packets(self, packets: np.ndarray) -> np.ndarray:
        """h-normalized corrected departure values of standard-form packets."""
        if len(packets) == 0:
            return np.zeros(0)
        return predict(self.model, self.inputs(packets))


def split_inputs(
    tuples: np.ndarray, stats: TrainingStats, pca: PcaModel, h: float
) -> TrainingSplit:
    tuples = np.asarray(tuples, dtype=np.float64)
    return TrainingSplit(
        build_inputs(tuples[:, :PACKET_SIZE], stats, pca, h), tuples[:, PACKET_SIZE]
    )


def fit_bundle(
    splits: DatasetSplits, h: float, l_max: int, config: TrainConfig
) -> Tuple[ModelBundle, pd.DataFrame]:
    """
    Fit preprocessing on the training split, then train the network.

    Returns:
        Tuple[ModelBundle, pd.DataFrame]: Trained bundle and training log
    """
    stats, pca = fit(splits.train[:, :PACKET_SIZE], h, config.n_components)
    model, log = train(
        split_inputs(splits.train, stats, pca, h),
        split_inputs(splits.validation, stats, pca, h),
        config,
    )
    return ModelBundle(model, stats, pca, h, l_max), log


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------


def _expected_shapes(n_in: int, hidden: int) -> List[Tuple[int, int]]:
    return [(hidden, n_in)] + [(hidden, hidden)] * (N_HIDDEN_LAYERS - 1) + [(1, hidden)]


def to_document(bundle: ModelBundle) -> Dict[str, Any]:
    model = bundle.model
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": {
            "n_in": model.n_in,
            "hidden_units": model.hidden_units,
            "hidden_layers": N_HIDDEN_LAYERS,
            "activation": "relu",
        },
        "h": bundle.h,
        "l_max": bundle.l_max,
        "layers": [
            {
                "weight": layer.weight.detach().tolist(),
                "bias": layer.bias.detach().tolist(),
            }
            for layer in model.linear_layers()
        ],
        "stats": bundle.stats.to_dict(),
        "pca": bundle.pca.to_dict(),
    }


def save_model(path: str, bundle: ModelBundle) -> None:
    """
    Write a bundle as a versioned JSON document.

    Floats are written in shortest round-trip form, so loading restores
    every weight exactly and re-saving produces identical bytes.
    """
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(to_document(bundle), handle, indent=1, sort_keys=True)
        handle.write("\n")


def from_document(doc: Dict[str, Any]) -> ModelBundle:
    """
    Rebuild a bundle from a parsed model document.

    Raises:
        ModelFormatError: On version mismatch, missing fields or inconsistent
            layer dimensions
    """
    version = doc.get("format_version") if isinstance(doc, dict) else None
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        arch = doc["architecture"]
        n_in = int(arch["n_in"])
        hidden = int(arch["hidden_units"])
        if int(arch["hidden_layers"]) != N_HIDDEN_LAYERS:
            raise ModelFormatError(
                f"model has {arch['hidden_layers']} hidden layers, expected {N_HIDDEN_LAYERS}"
            )
        stats = TrainingStats.from_dict(doc["stats"])
        pca = PcaModel.from_dict(doc["pca"])
        layers = doc["layers"]
        h = float(doc["h"])
        l_max = int(doc["l_max"])
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"malformed model document: {e}") from e

    if n_in != pca.n_components + 1:
        raise ModelFormatError(
            f"input width {n_in} does not match {pca.n_components} PCA components + 1"
        )
    expected = _expected_shapes(n_in, hidden)
    if len(layers) != len(expected):
        raise ModelFormatError(f"expected {len(expected)} layers, found {len(layers)}")

    model = MlpModel(n_in, hidden)
    with torch.no_grad():
        for index, (layer, entry, shape) in enumerate(zip(model.linear_layers(), layers, expected)):
            weight = np.asarray(entry["weight"], dtype=np.float64)
            bias = np.asarray(entry["bias"], dtype=np.float64)
            if weight.shape != shape or bias.shape != (shape[0],):
                raise ModelFormatError(
                    f"layer {index}: expected weight {shape} and bias ({shape[0]},), "
                    f"got {weight.shape} and {bias.shape}"
                )
            if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
                raise ModelFormatError(f"layer {index}: non-finite parameters")
            layer.weight.copy_(torch.from_numpy(weight))
            layer.bias.copy_(torch.from_numpy(bias))
    model.eval()
    return ModelBundle(model, stats, pca, h, l_max)


def load_model(path: str) -> ModelBundle:
    """
    Read a bundle written by save_model.

    Raises:
        ModelFormatError: If the file is not a valid model document
    """
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"model file is not valid JSON: {e}") from e
    return from_document(doc)
