"""
Accuracy and mass measurements of level-set states.
"""

import logging
import math
from functools import partial
from typing import Callable, Optional, Tuple

import numpy as np

from HybridAdvection.constants import AREA_SUBCELLS
from HybridAdvection.models import BenchReport, SimulationState

logger = logging.getLogger(__name__)

SignedDistance = Callable[[np.ndarray], np.ndarray]


def _circle_distance(points: np.ndarray, center: Tuple[float, float], radius: float) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return np.hypot(points[:, 0] - center[0], points[:, 1] - center[1]) - radius


def circle_sdf(center: Tuple[float, float], radius: float) -> SignedDistance:
    """Signed distance to a circle, negative inside (picklable)."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    center = (float(center[0]), float(center[1]))
    return partial(_circle_distance, center=center, radius=float(radius))


def disk_area(radius: float) -> float:
    return math.pi * radius * radius


def _subcell_weights(subcells: int) -> np.ndarray:
    """Bilinear corner weights (slot order 00, 01, 10, 11) at subcell centers."""
    t = (np.arange(subcells) + 0.5) / subcells
    alpha, beta = np.meshgrid(t, t, indexing="ij")
    alpha, beta = alpha.ravel(), beta.ravel()
    return np.stack(
        [(1 - alpha) * (1 - beta), (1 - alpha) * beta, alpha * (1 - beta), alpha * beta], axis=1
    )


def area_quadrature(state: SimulationState, subcells: int = AREA_SUBCELLS) -> float:
    """
    Area of the region where phi < 0.

    Leaves whose corners share one sign count fully or not at all; the rest
    are split into subcells x subcells pieces classified by the sign of the
    bilinear interpolant at their centers.
    """
    if subcells < 1:
        raise ValueError(f"subcells must be positive, got {subcells}")
    grid = state.grid
    corners = grid.constrain(state.phi.values)[grid.leaf_corners]
    area = grid.leaf_area
    inside = np.all(corners < 0, axis=1)
    outside = np.all(corners > 0, axis=1)
    mixed = ~inside & ~outside
    total = float(np.sum(area[inside]))
    if mixed.any():
        values = corners[mixed] @ _subcell_weights(subcells).T
        negative = np.count_nonzero(values < 0, axis=1)
        total += float(np.sum(negative * area[mixed] / (subcells * subcells)))
    return total


def measure(
    state: SimulationState,
    analytic_sdf: SignedDistance,
    reference_area: Optional[float] = None,
    label: str = "",
    subcells: int = AREA_SUBCELLS,
) -> BenchReport:
    """
    Band errors against an analytic signed distance, and enclosed area.

    Errors use the nodes with |phi| <= sqrt(2) h_min. A state without any
    such node (or without a sign change) is reported as vanished with NaN
    errors.

    Args:
        state: State to measure
        analytic_sdf: Exact signed distance function of points
        reference_area: Area the loss percentage is measured against
        label: Report label
        subcells: Subcells per axis of the area quadrature

    Returns:
        BenchReport: The measurement (wall time left at zero)
    """
    grid = state.grid
    phi = grid.constrain(state.phi.values)
    band = np.abs(phi) <= math.sqrt(2.0) * grid.h_min
    vanished = not band.any() or bool(np.all(phi > 0)) or bool(np.all(phi < 0))
    if band.any():
        err = np.abs(phi[band] - np.asarray(analytic_sdf(grid.node_coords[band])))
        mae, linf = float(np.mean(err)), float(np.max(err))
    else:
        mae = linf = float("nan")
    if vanished:
        logger.warning("interface vanished at t=%.6g (%s)", state.time, label or "unlabeled")
    area = area_quadrature(state, subcells)
    if reference_area is not None and reference_area > 0:
        loss = 100.0 * (reference_area - area) / reference_area
    else:
        loss = float("nan")
    return BenchReport(
        mae=mae,
        linf=linf,
        area=area,
        area_loss_pct=loss,
        label=label,
        time=state.time,
        vanished=vanished,
    )
