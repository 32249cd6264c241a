"""
Data packets for interface-adjacent vertices.

Packets are handled as rows of an (m, PACKET_SIZE) array in PACKET_COLUMNS
order; the DataPacket wrappers below exist for single-packet callers and
tests. All transforms are pure and return new arrays.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from HybridAdvection.advect import departure_points
from HybridAdvection.constants import COL, CORNER_SLOTS, PACKET_SIZE, VELOCITY_EPS
from HybridAdvection.field_ops import nodes_next_to_gamma
from HybridAdvection.interp import BILINEAR, QUADRATIC, sample
from HybridAdvection.models import DataPacket, ScalarField, SimulationState, VectorField
from HybridAdvection.validators import validate_packets

logger = logging.getLogger(__name__)

PHI_COLUMNS = [COL[c] for c in ("phi_a", "phi_00", "phi_01", "phi_10", "phi_11", "phi_d")]
NEGATED_COLUMNS = PHI_COLUMNS + [COL["kappa_a"], COL["phixx_d"], COL["phiyy_d"]]
PHI_CORNERS = slice(COL["phi_00"], COL["phi_11"] + 1)
U_CORNERS = slice(COL["u_00_x"], COL["u_11_y"] + 1)
U_HAT = [COL["u_hat_a_x"], COL["u_hat_a_y"]]
XD_REL = [COL["xd_rel_x"], COL["xd_rel_y"]]


def _slot_permutation(transform) -> np.ndarray:
    """new slot k holds old slot perm[k] under a map of unit-cell corners."""
    index = {slot: k for k, slot in enumerate(CORNER_SLOTS)}
    perm = np.empty(len(CORNER_SLOTS), dtype=np.int64)
    for old, slot in enumerate(CORNER_SLOTS):
        perm[index[transform(*slot)]] = old
    return perm


# Counter-clockwise quarter turn about the cell center: (a, b) -> (1 - b, a)
QUARTER_TURN_SLOTS = _slot_permutation(lambda a, b: (1 - b, a))
# Reflection across the diagonal: (a, b) -> (b, a)
REFLECTION_SLOTS = _slot_permutation(lambda a, b: (b, a))


def collect_data_packets(
    state: SimulationState,
    normals: VectorField,
    curvatures: ScalarField,
    phixx: ScalarField,
    phiyy: ScalarField,
    dt: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Build packets for the valid vertices next to the interface.

    A vertex is skipped when |u(x_hat)| <= VELOCITY_EPS, when its departure
    point leaves the domain, or when the cell owning the departure point is
    not at the finest level.

    Args:
        state: Current state
        normals: Nodal unit normals on the state's grid
        curvatures: Nodal curvature on the state's grid
        phixx: Nodal phi_xx on the state's grid
        phiyy: Nodal phi_yy on the state's grid
        dt: Time step

    Returns:
        Tuple[np.ndarray, np.ndarray]: (packets of shape (m, PACKET_SIZE),
        arrival coordinates of shape (m, 2))
    """
    grid = state.grid
    nodes = nodes_next_to_gamma(state.phi)
    if nodes.size == 0:
        return np.zeros((0, PACKET_SIZE)), np.zeros((0, 2))

    coords = grid.node_coords[nodes]
    _, x_d, u_hat, valid = departure_points(state, coords, dt)
    valid &= np.linalg.norm(u_hat, axis=1) > VELOCITY_EPS
    owners = np.full(nodes.size, -1, dtype=np.int64)
    if valid.any():
        owners[valid] = grid.locate_owners(x_d[valid])
        valid[valid] &= grid.leaf_level[owners[valid]] == grid.l_max
    if not valid.any():
        return np.zeros((0, PACKET_SIZE)), np.zeros((0, 2))

    nodes, coords, x_d, u_hat, owners = (
        nodes[valid],
        coords[valid],
        x_d[valid],
        u_hat[valid],
        owners[valid],
    )
    h = grid.h_min
    phi = grid.constrain(state.phi.values)
    vel = grid.constrain(state.vel.values)
    corners = grid.leaf_corners[owners]
    lower_left = grid.origin + np.stack([grid.leaf_ix[owners], grid.leaf_iy[owners]], axis=1) * h

    phi_a = phi[nodes]
    projection = coords - phi_a[:, None] * normals.values[nodes]

    packets = np.empty((nodes.size, PACKET_SIZE))
    packets[:, COL["phi_a"]] = phi_a
    packets[:, U_HAT] = u_hat
    packets[:, COL["d"]] = np.linalg.norm(x_d - coords, axis=1)
    packets[:, XD_REL] = np.clip((x_d - lower_left) / h, 0.0, 1.0)
    packets[:, PHI_CORNERS] = phi[corners]
    packets[:, U_CORNERS] = vel[corners].reshape(nodes.size, 8)
    packets[:, COL["phixx_d"]] = sample(phixx, x_d, BILINEAR)
    packets[:, COL["phiyy_d"]] = sample(phiyy, x_d, BILINEAR)
    packets[:, COL["kappa_a"]] = sample(curvatures, projection, BILINEAR, clamp=True)
    packets[:, COL["phi_d"]] = sample(state.phi, x_d, QUADRATIC, phixx, phiyy)
    logger.debug("collected %d packet(s) from %d candidate node(s)", nodes.size, valid.size)
    return packets, coords


# ----------------------------------------------------------------------
# batch transforms
# ----------------------------------------------------------------------


def normalize_curvature_signs(
    packets: np.ndarray, targets: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """
    Negate level-set quantities of packets with positive curvature.

    Args:
        packets: Packet batch
        targets: Optional h-normalized targets, negated alongside

    Returns:
        Tuple: (packets, targets, signs) with sign +1 for flipped rows and
        -1 for rows left unchanged (kappa_a <= 0)
    """
    out = validate_packets(packets).copy()
    flip = out[:, COL["kappa_a"]] > 0
    out[np.ix_(flip, NEGATED_COLUMNS)] *= -1.0
    signs = np.where(flip, 1.0, -1.0)
    if targets is not None:
        targets = np.where(flip, -np.asarray(targets, dtype=np.float64), targets)
    return out, targets, signs


def restore_signs(values: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Undo normalize_curvature_signs on level-set values."""
    return np.where(np.asarray(signs) > 0, -np.asarray(values), values)


def _turn_once(packets: np.ndarray) -> np.ndarray:
    out = packets.copy()
    ux, uy = packets[:, U_HAT[0]], packets[:, U_HAT[1]]
    out[:, U_HAT[0]], out[:, U_HAT[1]] = -uy, ux
    a, b = packets[:, XD_REL[0]], packets[:, XD_REL[1]]
    out[:, XD_REL[0]], out[:, XD_REL[1]] = 1.0 - b, a
    out[:, PHI_CORNERS] = packets[:, PHI_CORNERS][:, QUARTER_TURN_SLOTS]
    corner_u = packets[:, U_CORNERS].reshape(-1, 4, 2)[:, QUARTER_TURN_SLOTS]
    out[:, U_CORNERS] = np.stack([-corner_u[:, :, 1], corner_u[:, :, 0]], axis=2).reshape(-1, 8)
    out[:, COL["phixx_d"]] = packets[:, COL["phiyy_d"]]
    out[:, COL["phiyy_d"]] = packets[:, COL["phixx_d"]]
    return out


def rotate_quarter_turns(packets: np.ndarray, turns: np.ndarray) -> np.ndarray:
    """
    Rotate each packet counter-clockwise by turns[i] quarter turns.

    Vectors rotate with the configuration, corner slots and the cell-local
    departure coordinates follow the cell, and phi_xx, phi_yy trade places on
    odd turns.
    """
    out = validate_packets(packets).copy()
    turns = np.mod(np.broadcast_to(np.asarray(turns, dtype=np.int64), (out.shape[0],)), 4)
    for k in range(1, 4):
        rows = turns >= k
        if rows.any():
            out[rows] = _turn_once(out[rows])
    return out


def standard_turns(packets: np.ndarray) -> np.ndarray:
    """
    Quarter turns that bring -u_hat_a into the first quadrant.

    Raises:
        ValueError: If a packet has zero u_hat_a
    """
    packets = validate_packets(packets)
    vx = -packets[:, U_HAT[0]]
    vy = -packets[:, U_HAT[1]]
    if np.any((vx == 0) & (vy == 0)):
        raise ValueError("cannot reorient a packet with zero velocity")
    turns = np.zeros(packets.shape[0], dtype=np.int64)
    turns[(vx <= 0) & (vy > 0)] = 3
    turns[(vx < 0) & (vy <= 0)] = 2
    turns[(vx >= 0) & (vy < 0)] = 1
    return turns


def reorient_packets(packets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotate packets to standard form.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (rotated packets, quarter turns applied)
    """
    turns = standard_turns(packets)
    return rotate_quarter_turns(packets, turns), turns


def reflect_packets(packets: np.ndarray) -> np.ndarray:
    """Reflect packets across the line y = x through the arrival point."""
    packets = validate_packets(packets)
    out = packets.copy()
    out[:, U_HAT] = packets[:, U_HAT[::-1]]
    out[:, XD_REL] = packets[:, XD_REL[::-1]]
    out[:, PHI_CORNERS] = packets[:, PHI_CORNERS][:, REFLECTION_SLOTS]
    corner_u = packets[:, U_CORNERS].reshape(-1, 4, 2)[:, REFLECTION_SLOTS]
    out[:, U_CORNERS] = corner_u[:, :, ::-1].reshape(-1, 8)
    out[:, COL["phixx_d"]] = packets[:, COL["phiyy_d"]]
    out[:, COL["phiyy_d"]] = packets[:, COL["phixx_d"]]
    return out


def standard_form(
    packets: np.ndarray, targets: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """
    Curvature-normalize then reorient a packet batch.

    Returns:
        Tuple: (packets, targets, signs) as in normalize_curvature_signs
    """
    normalized, targets, signs = normalize_curvature_signs(packets, targets)
    rotated, _ = reorient_packets(normalized)
    return rotated, targets, signs


# ----------------------------------------------------------------------
# single-packet wrappers
# ----------------------------------------------------------------------


def normalize_curvature_sign(packet: DataPacket) -> Tuple[DataPacket, int]:
    """
    Negate the level-set quantities of a packet whose curvature is positive.

    Returns:
        Tuple[DataPacket, int]: (packet, +1 if negated else -1)
    """
    rows, _, signs = normalize_curvature_signs(packet.to_array())
    return DataPacket.from_array(rows[0]), int(signs[0])


def reorient(packet: DataPacket) -> DataPacket:
    """
    Rotate a packet so that -u_hat_a lies in the first quadrant.

    Raises:
        ValueError: If u_hat_a is the zero vector
    """
    rows, _ = reorient_packets(packet.to_array())
    return DataPacket.from_array(rows[0])


def reflect(packet: DataPacket) -> DataPacket:
    return DataPacket.from_array(reflect_packets(packet.to_array())[0])
