"""
Bilinear and second-derivative-corrected quadratic interpolation.

The scalar functions work on a single cell and are used by tests and by the
packet code; `sample` is the batch entry point used by the solvers.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from HybridAdvection.models import LeafCell, ScalarField, VectorField
from HybridAdvection.validators import validate_points

Field = Union[ScalarField, VectorField]

BILINEAR = "bilinear"
QUADRATIC = "quadratic"
MODES = (BILINEAR, QUADRATIC)


def _cell_coordinates(cell: LeafCell, p: Tuple[float, float]) -> Tuple[float, float]:
    if not cell.contains(p):
        raise ValueError(
            f"point {tuple(p)} lies outside cell at ({cell.x0}, {cell.y0}) of width {cell.width}"
        )
    alpha = min(max((p[0] - cell.x0) / cell.width, 0.0), 1.0)
    beta = min(max((p[1] - cell.y0) / cell.width, 0.0), 1.0)
    return alpha, beta


def _blend(values: Sequence[float], alpha: float, beta: float) -> float:
    v00, v01, v10, v11 = values
    return (
        (1.0 - alpha) * (1.0 - beta) * v00
        + (1.0 - alpha) * beta * v01
        + alpha * (1.0 - beta) * v10
        + alpha * beta * v11
    )


def bilinear(cell: LeafCell, corner_values: Sequence[float], p: Tuple[float, float]) -> float:
    """
    Bilinear interpolation inside one cell.

    Args:
        cell: Cell containing p
        corner_values: Values at corners 00, 01, 10, 11
        p: Query point

    Returns:
        float: Interpolated value

    Raises:
        ValueError: If p is outside the closed cell
    """
    if len(corner_values) != 4:
        raise ValueError(f"expected 4 corner values, got {len(corner_values)}")
    alpha, beta = _cell_coordinates(cell, p)
    return _blend(corner_values, alpha, beta)


def quadratic(
    cell: LeafCell,
    corner_values: Sequence[float],
    phixx_corners: Sequence[float],
    phiyy_corners: Sequence[float],
    p: Tuple[float, float],
) -> float:
    """
    Bilinear interpolation corrected with bilinearly interpolated second derivatives.

    Raises:
        ValueError: If p is outside the closed cell
    """
    alpha, beta = _cell_coordinates(cell, p)
    w2 = cell.width * cell.width
    phixx = _blend(phixx_corners, alpha, beta)
    phiyy = _blend(phiyy_corners, alpha, beta)
    return (
        _blend(corner_values, alpha, beta)
        - 0.5 * w2 * alpha * (1.0 - alpha) * phixx
        - 0.5 * w2 * beta * (1.0 - beta) * phiyy
    )


def sample(
    field: Field,
    points: np.ndarray,
    mode: str = BILINEAR,
    phixx: Optional[ScalarField] = None,
    phiyy: Optional[ScalarField] = None,
    clamp: bool = False,
) -> np.ndarray:
    """
    Interpolate a nodal field at arbitrary points.

    Hanging corners take the value of the coarse neighbor's interpolant
    before the cell rule is applied.

    Args:
        field: Scalar or vector field to sample
        points: Query points, shape (m, 2)
        mode: "bilinear" or "quadratic"
        phixx: Nodal second x-derivative (quadratic mode only)
        phiyy: Nodal second y-derivative (quadratic mode only)
        clamp: Clamp outside points to the boundary instead of failing

    Returns:
        np.ndarray: Values, shape (m,) for scalars or (m, 2) for vectors

    Raises:
        OutOfDomainError: If a point is outside the domain and clamp is False
        ValueError: If the mode is unknown or derivative fields are missing
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    grid = field.grid
    pts = validate_points(points)
    if pts.shape[0] == 0:
        shape = (0,) if field.values.ndim == 1 else (0, 2)
        return np.zeros(shape)

    owners, weights, alpha, beta = grid.bilinear_weights(pts, clamp)
    corners = grid.leaf_corners[owners]
    values = grid.constrain(field.values)[corners]
    if values.ndim == 2:
        result = np.einsum("ij,ij->i", weights, values)
    else:
        result = np.einsum("ij,ijk->ik", weights, values)
    if mode == BILINEAR:
        return result

    if phixx is None or phiyy is None:
        raise ValueError("quadratic sampling requires phixx and phiyy")
    if field.values.ndim != 1:
        raise ValueError("quadratic sampling applies to scalar fields only")
    if phixx.grid is not grid or phiyy.grid is not grid:
        raise ValueError("derivative fields must live on the sampled grid")
    fxx = np.einsum("ij,ij->i", weights, grid.constrain(phixx.values)[corners])
    fyy = np.einsum("ij,ij->i", weights, grid.constrain(phiyy.values)[corners])
    width = grid.leaf_size[owners] * grid.h_min
    w2 = width * width
    return result - 0.5 * w2 * (alpha * (1.0 - alpha) * fxx + beta * (1.0 - beta) * fyy)
