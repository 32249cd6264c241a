"""
Packet preprocessing: h-scaling, grouped standardization, PCA and whitening.

The fitted TrainingStats and PcaModel are immutable; every transform here is
a pure function of its inputs, and batch transforms give the same bits as
one-at-a-time transforms.
"""

import logging
from typing import Tuple

import numpy as np
from sklearn.decomposition import PCA

from HybridAdvection.constants import (
    COL,
    FEATURE_GROUPS,
    PACKET_SIZE,
    WHITENING_FLOOR,
)
from HybridAdvection.errors import FitError
from HybridAdvection.models import DataPacket, PcaModel, TrainingStats
from HybridAdvection.validators import validate_packets, validate_positive

logger = logging.getLogger(__name__)

_PHI = [COL[c] for c in FEATURE_GROUPS["phi"]]
_SECOND = [COL[c] for c in FEATURE_GROUPS["xxyy"]]


def h_scale(packets: np.ndarray, h: float) -> np.ndarray:
    """
    Express packets in units of the mesh size.

    Level-set values and d are divided by h, second derivatives multiplied
    by h^2 and curvature by h. Cell-local coordinates and velocities are
    already dimensionless.
    """
    validate_positive(h, "h")
    out = validate_packets(packets).copy()
    out[:, _PHI] /= h
    out[:, COL["d"]] /= h
    out[:, _SECOND] *= h * h
    out[:, COL["kappa_a"]] *= h
    return out


def _group_vectors(stats: TrainingStats) -> Tuple[np.ndarray, np.ndarray]:
    mu = np.empty(PACKET_SIZE)
    sigma = np.empty(PACKET_SIZE)
    for group, columns in FEATURE_GROUPS.items():
        idx = [COL[c] for c in columns]
        mu[idx] = stats.means[group]
        sigma[idx] = stats.sigmas[group]
    return mu, sigma


def standardize(scaled: np.ndarray, stats: TrainingStats) -> np.ndarray:
    mu, sigma = _group_vectors(stats)
    return (scaled - mu) / sigma


def _canonical_signs(components: np.ndarray) -> np.ndarray:
    """Flip rows so each row's largest-magnitude entry is positive."""
    lead = components[np.arange(components.shape[0]), np.argmax(np.abs(components), axis=1)]
    return components * np.where(lead < 0, -1.0, 1.0)[:, None]


def fit(packets: np.ndarray, h: float, n_components: int) -> Tuple[TrainingStats, PcaModel]:
    """
    Fit grouped statistics and the whitened PCA basis on training packets.

    Args:
        packets: Curvature-normalized, reoriented training packets
        h: Mesh size the packets were collected at
        n_components: Number of principal components to keep

    Returns:
        Tuple[TrainingStats, PcaModel]: Fitted preprocessing models

    Raises:
        FitError: If there are too few packets, a feature group has zero
            variance, or fewer than n_components usable directions exist
    """
    packets = validate_packets(packets)
    if not 1 <= n_components <= PACKET_SIZE:
        raise ValueError(f"n_components must be in [1, {PACKET_SIZE}], got {n_components}")
    if packets.shape[0] < n_components + 1:
        raise FitError(
            f"need at least {n_components + 1} packets to fit, got {packets.shape[0]}"
        )

    scaled = h_scale(packets, h)
    means = {}
    sigmas = {}
    for group, columns in FEATURE_GROUPS.items():
        pooled = scaled[:, [COL[c] for c in columns]].ravel()
        sigma = float(np.std(pooled))
        if not sigma > 0:
            raise FitError(f"feature group '{group}' has zero variance")
        means[group] = float(np.mean(pooled))
        sigmas[group] = sigma
    stats = TrainingStats(means=means, sigmas=sigmas, n_components=n_components)

    standardized = standardize(scaled, stats)
    pca = PCA(n_components=min(PACKET_SIZE, packets.shape[0]), svd_solver="covariance_eigh")
    pca.fit(standardized)
    eigenvalues = pca.explained_variance_
    usable = int(np.count_nonzero(eigenvalues > WHITENING_FLOOR * eigenvalues[0]))
    if usable < n_components:
        raise FitError(
            f"only {usable} principal direction(s) above the whitening floor, "
            f"{n_components} requested"
        )
    model = PcaModel(
        mean=pca.mean_,
        components=_canonical_signs(pca.components_[:n_components]),
        eigenvalues=eigenvalues[:n_components],
    )
    retained = float(np.sum(eigenvalues[:n_components]) / np.sum(eigenvalues))
    logger.info(
        "fitted preprocessing on %d packets: %d components keep %.2f%% of the variance",
        packets.shape[0],
        n_components,
        100.0 * retained,
    )
    return stats, model


def project(standardized: np.ndarray, pca: PcaModel) -> np.ndarray:
    """Whitened principal coordinates of standardized vectors."""
    centered = standardized - pca.mean
    # Row-wise reduction keeps batch and single results bit-identical
    product = np.multiply(centered[:, None, :], pca.components[None, :, :], order="C")
    coords = np.sum(product, axis=2)
    return coords / np.sqrt(pca.eigenvalues)


def unproject(whitened: np.ndarray, pca: PcaModel) -> np.ndarray:
    """Map whitened coordinates back to standardized vectors."""
    return (whitened * np.sqrt(pca.eigenvalues)) @ pca.components + pca.mean


def transform_batch(
    packets: np.ndarray, stats: TrainingStats, pca: PcaModel, h: float
) -> np.ndarray:
    """
    Preprocess a packet batch into whitened principal coordinates.

    Returns:
        np.ndarray: Shape (m, n_components)

    Raises:
        ValueError: If the result is not finite
    """
    whitened = project(standardize(h_scale(packets, h), stats), pca)
    if not np.all(np.isfinite(whitened)):
        raise ValueError("preprocessing produced non-finite values")
    return whitened


def transform(packet: DataPacket, stats: TrainingStats, pca: PcaModel, h: float) -> np.ndarray:
    return transform_batch(packet.to_array()[None, :], stats, pca, h)[0]


def build_inputs(
    packets: np.ndarray, stats: TrainingStats, pca: PcaModel, h: float
) -> np.ndarray:
    """
    Network inputs: whitened coordinates followed by the h-scaled phi_d.

    Returns:
        np.ndarray: Shape (m, n_components + 1)
    """
    packets = validate_packets(packets)
    whitened = transform_batch(packets, stats, pca, h)
    return np.hstack([whitened, packets[:, COL["phi_d"]][:, None] / h])
