"""
Zero-level contour extraction on quadtree leaves.

Marching squares runs on every leaf whose constrained corner values change
sign; segments from neighboring leaves are chained into polylines by their
shared edge points.
"""

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from HybridAdvection.metrics import SignedDistance
from HybridAdvection.models import SimulationState

logger = logging.getLogger(__name__)

CONTOUR_COLUMNS = ["polyline", "vertex", "x", "y"]

Segment = Tuple[Tuple[float, float], Tuple[float, float]]

# Cell edges as (slot a, slot b), walked counter-clockwise from the bottom
_EDGES = ((0, 2), (2, 3), (3, 1), (1, 0))
_BOTTOM, _RIGHT, _TOP, _LEFT = range(4)


def _edge_point(p_a: np.ndarray, p_b: np.ndarray, v_a: float, v_b: float) -> Tuple[float, float]:
    t = v_a / (v_a - v_b)
    p = p_a + t * (p_b - p_a)
    return float(p[0]), float(p[1])


def cell_segments(corners: np.ndarray, values: np.ndarray) -> List[Segment]:
    """
    Marching-squares segments of one cell.

    Args:
        corners: Corner positions in slot order 00, 01, 10, 11, shape (4, 2)
        values: Level-set values at the corners

    Returns:
        List[Segment]: Zero, one or two segments; saddles are resolved with
        the cell-center average
    """
    inside = values < 0
    crossings: Dict[int, Tuple[float, float]] = {}
    for k, (a, b) in enumerate(_EDGES):
        if inside[a] != inside[b]:
            crossings[k] = _edge_point(corners[a], corners[b], values[a], values[b])
    if len(crossings) == 2:
        first, second = crossings.values()
        return [(first, second)]
    if len(crossings) == 4:
        center_inside = float(np.mean(values)) < 0
        if center_inside == inside[0]:
            pairs = ((_BOTTOM, _RIGHT), (_TOP, _LEFT))
        else:
            pairs = ((_LEFT, _BOTTOM), (_RIGHT, _TOP))
        return [(crossings[a], crossings[b]) for a, b in pairs]
    return []


def _chain(segments: List[Segment], tol: float) -> List[np.ndarray]:
    """Join segments sharing endpoints into polylines; closed loops repeat their first vertex."""

    def key(p):
        return (round(p[0] / tol), round(p[1] / tol))

    ends = defaultdict(list)
    for i, (a, b) in enumerate(segments):
        ends[key(a)].append(i)
        ends[key(b)].append(i)
    used = np.zeros(len(segments), dtype=bool)

    def extend(path: List[Tuple[float, float]]) -> None:
        while True:
            nxt = next((j for j in ends[key(path[-1])] if not used[j]), None)
            if nxt is None:
                return
            used[nxt] = True
            a, b = segments[nxt]
            path.append(b if key(a) == key(path[-1]) else a)

    # open chains start at endpoints with a single segment
    open_end = [
        len(ends[key(a)]) == 1 or len(ends[key(b)]) == 1 for a, b in segments
    ]
    order = sorted(range(len(segments)), key=lambda i: not open_end[i])
    polylines = []
    for i in order:
        if used[i]:
            continue
        used[i] = True
        a, b = segments[i]
        if len(ends[key(b)]) == 1:
            a, b = b, a
        path = [a, b]
        extend(path)
        if len(path) > 2 and key(path[-1]) == key(path[0]):
            path[-1] = path[0]
        polylines.append(np.asarray(path))
    return polylines


def extract_contour(state: SimulationState) -> List[np.ndarray]:
    """
    Polylines of the zero level of state.phi.

    Returns:
        List[np.ndarray]: Polylines of shape (k, 2), ordered by their first
        vertex; closed polylines end on their first vertex
    """
    grid = state.grid
    corner_values = grid.constrain(state.phi.values)[grid.leaf_corners]
    inside = corner_values < 0
    mixed = np.flatnonzero(inside.any(axis=1) & ~inside.all(axis=1))
    coords = grid.node_coords
    segments: List[Segment] = []
    for leaf in mixed:
        segments.extend(cell_segments(coords[grid.leaf_corners[leaf]], corner_values[leaf]))
    polylines = _chain(segments, 1e-9 * grid.h_min)
    polylines.sort(key=lambda p: (p[0, 0], p[0, 1]))
    logger.debug("extracted %d polyline(s) from %d interface leaves", len(polylines), mixed.size)
    return polylines


def contour_frame(polylines: List[np.ndarray]) -> pd.DataFrame:
    rows = [
        (i, j, float(p[0]), float(p[1]))
        for i, line in enumerate(polylines)
        for j, p in enumerate(line)
    ]
    return pd.DataFrame(rows, columns=CONTOUR_COLUMNS)


def emit_contour(state: SimulationState, path: str) -> List[np.ndarray]:
    """
    Write the zero level of state.phi as CSV polylines.

    An interface-free state produces a header-only file.

    Returns:
        List[np.ndarray]: The written polylines
    """
    polylines = extract_contour(state)
    contour_frame(polylines).to_csv(path, index=False, float_format="%.17g")
    return polylines


def plot_contour(
    state: SimulationState,
    path: str,
    analytic_sdf: Optional[SignedDistance] = None,
    title: str = "Zero level set",
    resolution: int = 400,
) -> str:
    """
    Save an SVG of the computed contour, overlaid on the analytic one if given.

    Returns:
        str: The filename of the saved figure
    """
    sns.set_theme(style="whitegrid")
    grid = state.grid
    lo, hi = grid.origin, grid.upper
    plt.figure(figsize=(6, 6))
    if analytic_sdf is not None:
        xs = np.linspace(lo[0], hi[0], resolution)
        ys = np.linspace(lo[1], hi[1], resolution)
        gx, gy = np.meshgrid(xs, ys)
        exact = np.asarray(analytic_sdf(np.stack([gx.ravel(), gy.ravel()], axis=1)))
        plt.contour(gx, gy, exact.reshape(gx.shape), levels=[0.0], colors="black", linestyles="--")
        plt.plot([], [], "k--", label="analytic")
    for i, line in enumerate(extract_contour(state)):
        plt.plot(line[:, 0], line[:, 1], color="tab:red", label="computed" if i == 0 else None)
    plt.xlim(lo[0], hi[0])
    plt.ylim(lo[1], hi[1])
    plt.gca().set_aspect("equal")
    plt.title(title)
    plt.xlabel("x")
    plt.ylabel("y")
    plt.legend(loc="upper right")
    plt.tight_layout()
    plt.savefig(path, format="svg")
    plt.close()
    return path
