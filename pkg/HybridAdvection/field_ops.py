"""
Nodal differential operators and level-set reinitialization.

Differences are taken at each node's own spacing (the width of its smallest
incident leaf). On nodes with complete h-uniform stencils this reduces to the
standard nine-point formulas; elsewhere neighbor values come from the grid's
interpolation operator and one-sided formulas cover missing sides.
"""

import logging
from typing import Iterable, NamedTuple, Optional, Tuple

import numpy as np

from HybridAdvection.constants import (
    GRADIENT_EPS,
    NEGATIVE_FLOW_BAND,
    PSEUDO_TIME_FACTOR,
    THETA_W,
    VELOCITY_EPS,
)
from HybridAdvection.interp import sample
from HybridAdvection.models import ScalarField, VectorField
from HybridAdvection.quadtree import QuadtreeGrid
from HybridAdvection.validators import validate_iterations, validate_points

logger = logging.getLogger(__name__)

# Stencil table columns of the axis neighbors
EAST, WEST, NORTH, SOUTH = 4, 3, 6, 1


def _shift(grid: QuadtreeGrid, values: np.ndarray, dx: int, dy: int):
    op, available = grid.neighbor_operator(dx, dy)
    return op @ values, available


def _spacing(grid: QuadtreeGrid) -> np.ndarray:
    return grid.node_spacing * grid.h_min


def _first_derivative(grid: QuadtreeGrid, v: np.ndarray, axis: int) -> np.ndarray:
    dx, dy = (1, 0) if axis == 0 else (0, 1)
    plus, has_plus = _shift(grid, v, dx, dy)
    minus, has_minus = _shift(grid, v, -dx, -dy)
    hs = _spacing(grid)
    out = np.zeros_like(v)
    both = has_plus & has_minus
    fwd = has_plus & ~has_minus
    bwd = has_minus & ~has_plus
    out[both] = (plus[both] - minus[both]) / (2.0 * hs[both])
    out[fwd] = (plus[fwd] - v[fwd]) / hs[fwd]
    out[bwd] = (v[bwd] - minus[bwd]) / hs[bwd]
    return out


def _second_derivative(grid: QuadtreeGrid, v: np.ndarray, axis: int) -> np.ndarray:
    dx, dy = (1, 0) if axis == 0 else (0, 1)
    plus, has_plus = _shift(grid, v, dx, dy)
    minus, has_minus = _shift(grid, v, -dx, -dy)
    plus2, has_plus2 = _shift(grid, v, 2 * dx, 2 * dy)
    minus2, has_minus2 = _shift(grid, v, -2 * dx, -2 * dy)
    hs2 = _spacing(grid) ** 2
    out = np.zeros_like(v)
    central = has_plus & has_minus
    fwd = ~central & has_plus & has_plus2
    bwd = ~central & ~fwd & has_minus & has_minus2
    out[central] = (plus[central] - 2.0 * v[central] + minus[central]) / hs2[central]
    out[fwd] = (v[fwd] - 2.0 * plus[fwd] + plus2[fwd]) / hs2[fwd]
    out[bwd] = (v[bwd] - 2.0 * minus[bwd] + minus2[bwd]) / hs2[bwd]
    return out


def _mixed_derivative(grid: QuadtreeGrid, v: np.ndarray) -> np.ndarray:
    ne, a1 = _shift(grid, v, 1, 1)
    nw, a2 = _shift(grid, v, -1, 1)
    se, a3 = _shift(grid, v, 1, -1)
    sw, a4 = _shift(grid, v, -1, -1)
    ok = a1 & a2 & a3 & a4
    hs2 = _spacing(grid) ** 2
    out = np.zeros_like(v)
    out[ok] = (ne[ok] - nw[ok] - se[ok] + sw[ok]) / (4.0 * hs2[ok])
    return out


def gradient(phi: ScalarField) -> VectorField:
    """Central-difference gradient, one-sided where a neighbor is missing."""
    grid = phi.grid
    v = grid.constrain(phi.values)
    grad = np.stack([_first_derivative(grid, v, 0), _first_derivative(grid, v, 1)], axis=1)
    return VectorField(grid, grad, flags=~grid.complete_mask)


def second_derivatives(phi: ScalarField) -> Tuple[ScalarField, ScalarField]:
    """
    Nodal phi_xx and phi_yy.

    Central second differences on uniform stencils and one-sided second
    differences where a side is missing; zero where neither fits.

    Args:
        phi: Level-set field

    Returns:
        Tuple[ScalarField, ScalarField]: (phi_xx, phi_yy), flagged where the
        node's stencil is incomplete
    """
    grid = phi.grid
    v = grid.constrain(phi.values)
    flags = ~grid.complete_mask
    return (
        ScalarField(grid, _second_derivative(grid, v, 0), flags=flags),
        ScalarField(grid, _second_derivative(grid, v, 1), flags=flags),
    )


def normals_and_curvature(phi: ScalarField) -> Tuple[VectorField, ScalarField]:
    """
    Unit normals and mean curvature of every level set.

    kappa = (phi_xx phi_y^2 - 2 phi_xy phi_x phi_y + phi_yy phi_x^2) / |grad phi|^3,
    clamped to |kappa| <= 1/h_min. Nodes whose gradient norm falls below
    GRADIENT_EPS get a zero normal and zero curvature.

    Args:
        phi: Level-set field

    Returns:
        Tuple[VectorField, ScalarField]: (normals, curvature); both carry a
        flag mask marking degenerate nodes and nodes without a complete
        nine-point stencil
    """
    grid = phi.grid
    v = grid.constrain(phi.values)
    px = _first_derivative(grid, v, 0)
    py = _first_derivative(grid, v, 1)
    pxx = _second_derivative(grid, v, 0)
    pyy = _second_derivative(grid, v, 1)
    pxy = _mixed_derivative(grid, v)

    norm = np.hypot(px, py)
    degenerate = norm < GRADIENT_EPS
    safe = np.where(degenerate, 1.0, norm)
    normals = np.stack([px / safe, py / safe], axis=1)
    normals[degenerate] = 0.0

    kappa = (pxx * py * py - 2.0 * pxy * px * py + pyy * px * px) / safe**3
    kappa[degenerate] = 0.0
    limit = 1.0 / grid.h_min
    kappa = np.clip(kappa, -limit, limit)

    flags = degenerate | ~grid.complete_mask
    if np.any(degenerate):
        logger.debug("%d node(s) with degenerate gradient", int(np.count_nonzero(degenerate)))
    return VectorField(grid, normals, flags=flags), ScalarField(grid, kappa, flags=flags)


def _godunov(dxp, dxm, dyp, dym, sign0):
    """Godunov upwind approximation of |grad phi|."""
    pos = sign0 >= 0
    gx_pos = np.maximum(np.minimum(dxp, 0.0) ** 2, np.maximum(dxm, 0.0) ** 2)
    gy_pos = np.maximum(np.minimum(dyp, 0.0) ** 2, np.maximum(dym, 0.0) ** 2)
    gx_neg = np.maximum(np.maximum(dxp, 0.0) ** 2, np.minimum(dxm, 0.0) ** 2)
    gy_neg = np.maximum(np.maximum(dyp, 0.0) ** 2, np.minimum(dym, 0.0) ** 2)
    return np.sqrt(np.where(pos, gx_pos + gy_pos, gx_neg + gy_neg))


def _one_sided(grid: QuadtreeGrid, v: np.ndarray, axis: int):
    dx, dy = (1, 0) if axis == 0 else (0, 1)
    plus, has_plus = _shift(grid, v, dx, dy)
    minus, has_minus = _shift(grid, v, -dx, -dy)
    hs = _spacing(grid)
    d_plus = (plus - v) / hs
    d_minus = (v - minus) / hs
    # A missing side copies the other one; both Godunov branches then see the same slope
    d_plus = np.where(has_plus, d_plus, d_minus)
    d_minus = np.where(has_minus, d_minus, d_plus)
    return d_plus, d_minus


class _InterfaceAnchor(NamedTuple):
    """Nodes with a sign change to an axis neighbor and their distance estimates."""

    mask: np.ndarray
    sign: np.ndarray
    distance: np.ndarray


def _interface_anchor(grid: QuadtreeGrid, phi0: np.ndarray) -> _InterfaceAnchor:
    """
    Estimate the distance to the zero level at nodes bracketing it.

    d = h phi0 / max(|central gradient| h, |one-sided differences|), using the
    node's own spacing h. Taking the largest difference keeps d from
    overshooting across a kink.
    """
    hs = _spacing(grid)
    near = np.zeros(grid.n_nodes, dtype=bool)
    delta = np.full(grid.n_nodes, GRADIENT_EPS) * hs
    central = []
    for dx, dy in ((1, 0), (0, 1)):
        plus, has_plus = _shift(grid, phi0, dx, dy)
        minus, has_minus = _shift(grid, phi0, -dx, -dy)
        near |= has_plus & (phi0 * plus <= 0.0)
        near |= has_minus & (phi0 * minus <= 0.0)
        fwd = np.where(has_plus, plus - phi0, 0.0)
        bwd = np.where(has_minus, phi0 - minus, 0.0)
        delta = np.maximum(delta, np.maximum(np.abs(fwd), np.abs(bwd)))
        both = has_plus & has_minus
        central.append(np.where(both, 0.5 * (fwd + bwd), np.where(has_plus, fwd, bwd)))
    delta = np.maximum(delta, np.hypot(central[0], central[1]))
    distance = np.where(near, hs * phi0 / delta, 0.0)
    return _InterfaceAnchor(near, np.sign(phi0), distance)


def _pseudo_time_rhs(
    grid: QuadtreeGrid, v: np.ndarray, smooth_sign: np.ndarray, anchor: _InterfaceAnchor
) -> np.ndarray:
    dxp, dxm = _one_sided(grid, v, 0)
    dyp, dym = _one_sided(grid, v, 1)
    rhs = -smooth_sign * (_godunov(dxp, dxm, dyp, dym, smooth_sign) - 1.0)
    near = anchor.mask
    hs = _spacing(grid)[near]
    rhs[near] = -(anchor.sign[near] * np.abs(v[near]) - anchor.distance[near]) / hs
    return rhs


def _redistance(phi: ScalarField, nu: int, frozen: Optional[np.ndarray]) -> ScalarField:
    nu = validate_iterations(nu)
    if nu == 0:
        return phi.with_values(phi.values.copy())
    grid = phi.grid
    h = grid.h_min
    dtau = PSEUDO_TIME_FACTOR * h
    phi0 = grid.constrain(phi.values)
    sign0 = phi0 / np.sqrt(phi0 * phi0 + h * h)
    anchor = _interface_anchor(grid, phi0)
    original = phi.values
    v = phi0.copy()
    if frozen is not None:
        v[frozen] = original[frozen]

    for _ in range(nu):
        stage = v + dtau * _pseudo_time_rhs(grid, v, sign0, anchor)
        if frozen is not None:
            stage[frozen] = original[frozen]
        stage2 = stage + dtau * _pseudo_time_rhs(grid, stage, sign0, anchor)
        v = 0.5 * (v + stage2)
        if frozen is not None:
            v[frozen] = original[frozen]

    v = grid.constrain(v)
    if frozen is not None:
        v[frozen] = original[frozen]
    return phi.with_values(v)


def reinitialize(phi: ScalarField, nu: int) -> ScalarField:
    """
    Drive phi toward a signed distance function.

    Runs nu pseudo-time steps of TVD-RK2 with a Godunov Hamiltonian,
    pseudo-time step h_min/2 and smoothed sign phi0 / sqrt(phi0^2 + h_min^2).
    Nodes with a sign change to an axis neighbor of phi0 relax toward their
    estimated distance to the zero level instead, which holds the interface
    in place up to O(h^2).

    Args:
        phi: Level-set field
        nu: Number of pseudo-time iterations (0 returns the input values)

    Returns:
        ScalarField: Reinitialized field on the same grid

    Raises:
        ValueError: If nu is negative
    """
    return _redistance(phi, nu, None)


def selective_reinitialize(
    phi: ScalarField, protected: Iterable, nu: int
) -> ScalarField:
    """
    Reinitialize while holding protected nodes at their input values.

    Protected values are still read by their neighbors' stencils.

    Args:
        phi: Level-set field
        protected: Coordinates of protected grid vertices, shape (m, 2)
        nu: Number of pseudo-time iterations

    Raises:
        ValueError: If a protected coordinate is not a grid vertex
    """
    if not isinstance(protected, np.ndarray):
        protected = list(protected)
    coords = np.asarray(protected, dtype=np.float64)
    frozen = np.zeros(phi.grid.n_nodes, dtype=bool)
    if coords.size:
        frozen[phi.grid.node_index(validate_points(coords, "protected"))] = True
    if not frozen.any():
        return _redistance(phi, nu, None)
    return _redistance(phi, nu, frozen)


def nodes_next_to_gamma(phi: ScalarField) -> np.ndarray:
    """
    Nodes with complete stencils and an axis-aligned sign change.

    A node qualifies when phi(x) * phi(x +- h, y) <= 0 or
    phi(x) * phi(x, y +- h) <= 0 for an h-uniform neighbor.

    Returns:
        np.ndarray: Sorted node indices
    """
    grid = phi.grid
    table = grid.stencil_table
    complete = grid.complete_mask
    v = grid.constrain(phi.values)
    crossing = np.zeros(grid.n_nodes, dtype=bool)
    for col in (EAST, WEST, NORTH, SOUTH):
        idx = table[:, col]
        crossing |= complete & (v * v[np.where(idx >= 0, idx, 0)] <= 0.0)
    return np.flatnonzero(crossing & complete)


def coords_with_negative_flow(
    phi_next: ScalarField, normals_prev: VectorField, vel_prev: VectorField
) -> np.ndarray:
    """
    Band nodes of the new grid that lag behind the moving interface.

    A node within |phi| <= 2 sqrt(2) h_min is selected when the angle
    between -sign(phi) n and the unit velocity is at most THETA_W, with n and
    u sampled from the previous step's fields.

    Args:
        phi_next: Level-set on the new grid
        normals_prev: Normals on the previous grid
        vel_prev: Velocity on the previous grid

    Returns:
        np.ndarray: Coordinates of selected nodes, shape (m, 2)
    """
    grid = phi_next.grid
    v = grid.constrain(phi_next.values)
    band = np.flatnonzero(np.abs(v) <= NEGATIVE_FLOW_BAND * grid.h_min)
    if band.size == 0:
        return np.zeros((0, 2))
    coords = grid.node_coords[band]
    n = sample(normals_prev, coords, clamp=True)
    u = sample(vel_prev, coords, clamp=True)
    n_norm = np.linalg.norm(n, axis=1)
    u_norm = np.linalg.norm(u, axis=1)
    usable = (n_norm > VELOCITY_EPS) & (u_norm > VELOCITY_EPS)
    cosine = np.zeros(band.size)
    cosine[usable] = (
        -np.sign(v[band][usable])
        * np.einsum("ij,ij->i", n[usable], u[usable])
        / (n_norm[usable] * u_norm[usable])
    )
    angle = np.arccos(np.clip(cosine, -1.0, 1.0))
    return coords[usable & (angle <= THETA_W)]
