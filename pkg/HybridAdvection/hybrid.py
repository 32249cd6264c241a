"""
Neural-corrected semi-Lagrangian advection.

ml_semi_lagrangian replaces the numerical departure values of vertices next
to the interface with guarded network predictions, pins them through the
regrid loop, and reports which pinned vertices must not be reinitialized.
simulate_hybrid alternates that step with plain numerical steps.
"""

import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from HybridAdvection.advect import (
    TIME_TOL,
    NodeOverrides,
    Observer,
    VelocityFunction,
    pin_time,
    protected_coords,
    semi_lagrangian_step,
    step_size,
    time_steps,
)
from HybridAdvection.constants import COL, GUARD_ABSOLUTE, GUARD_RELATIVE, REVERSION_WARNING_SHARE
from HybridAdvection.errors import PreconditionError
from HybridAdvection.field_ops import (
    normals_and_curvature,
    reinitialize,
    second_derivatives,
    selective_reinitialize,
)
from HybridAdvection.interp import QUADRATIC
from HybridAdvection.models import ScalarField, SimulationState, StepDiagnostics, VectorField
from HybridAdvection.neural import ModelBundle
from HybridAdvection.sampling import (
    collect_data_packets,
    normalize_curvature_signs,
    reflect_packets,
    reorient_packets,
    restore_signs,
)
from HybridAdvection.validators import validate_iterations

logger = logging.getLogger(__name__)


class AuxiliaryFields(NamedTuple):
    normals: VectorField
    curvature: ScalarField
    phixx: ScalarField
    phiyy: ScalarField

    @classmethod
    def compute(cls, phi: ScalarField) -> "AuxiliaryFields":
        normals, curvature = normals_and_curvature(phi)
        phixx, phiyy = second_derivatives(phi)
        return cls(normals, curvature, phixx, phiyy)


class HybridStepResult(NamedTuple):
    state: SimulationState
    protected: np.ndarray
    packets: int
    reversions: int


def guard_predictions(
    phi_star: np.ndarray, phi_d: np.ndarray, phi_a: np.ndarray, h: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Revert predictions that stray too far from the numerical estimate.

    A prediction is reverted to phi_d when |phi* - phi_d| / h exceeds
    GUARD_RELATIVE, when |phi* - phi_a| / h reaches GUARD_ABSOLUTE, or when
    it is not finite.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (guarded values, reverted mask)
    """
    phi_star = np.asarray(phi_star, dtype=np.float64)
    phi_d = np.asarray(phi_d, dtype=np.float64)
    phi_a = np.asarray(phi_a, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        reverted = (
            ~np.isfinite(phi_star)
            | (np.abs(phi_star - phi_d) / h > GUARD_RELATIVE)
            | (np.abs(phi_star - phi_a) / h >= GUARD_ABSOLUTE)
        )
    return np.where(reverted, phi_d, phi_star), reverted


def corrected_departure_values(
    bundle: ModelBundle, packets: np.ndarray, h: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Guarded departure values for raw packets, in the packets' own sign.

    Each packet is curvature-normalized and reoriented; the network sees it
    and its reflection and the two predictions are averaged.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (values, reverted mask)
    """
    normalized, _, signs = normalize_curvature_signs(packets)
    oriented, _ = reorient_packets(normalized)
    m = oriented.shape[0]
    predictions = bundle.predict_packets(np.vstack([oriented, reflect_packets(oriented)]))
    phi_star = 0.5 * (predictions[:m] + predictions[m:]) * h
    guarded, reverted = guard_predictions(
        phi_star, oriented[:, COL["phi_d"]], oriented[:, COL["phi_a"]], h
    )
    return restore_signs(guarded, signs), reverted


def check_preconditions(bundle: ModelBundle, state: SimulationState, dt: float) -> None:
    """
    Raises:
        PreconditionError: If the model was trained at another resolution or
            the step is not one mesh size long
    """
    h = state.grid.h_min
    if bundle.l_max != state.grid.l_max or abs(bundle.h - h) > TIME_TOL * h:
        raise PreconditionError(
            f"model trained at l_max={bundle.l_max} (h={bundle.h:g}) "
            f"cannot advect a grid with l_max={state.grid.l_max} (h={h:g})"
        )
    if abs(dt - h) > TIME_TOL * h:
        raise PreconditionError(f"neural steps need dt = h_min = {h:g}, got dt = {dt:g}")


def ml_semi_lagrangian(
    bundle: ModelBundle,
    state: SimulationState,
    aux: Optional[AuxiliaryFields] = None,
    cfl: float = 1.0,
    velocity_fn: Optional[VelocityFunction] = None,
    max_velocity: Optional[float] = None,
) -> HybridStepResult:
    """
    One semi-Lagrangian step with neural departure values near the interface.

    Args:
        bundle: Trained model and its preprocessing
        state: Current state
        aux: Normals, curvature and second derivatives of state.phi; computed
            when omitted
        cfl: Courant number
        velocity_fn: Analytic velocity for the new grid
        max_velocity: Known peak speed of the velocity

    Returns:
        HybridStepResult: New state, protected coordinates, packet and
        reversion counts

    Raises:
        PreconditionError: If dt differs from h_min or the model resolution
            does not match the grid
    """
    dt = step_size(state, cfl, max_velocity)
    check_preconditions(bundle, state, dt)
    if aux is None:
        aux = AuxiliaryFields.compute(state.phi)

    grid = state.grid
    h = grid.h_min
    packets, coords = collect_data_packets(
        state, aux.normals, aux.curvature, aux.phixx, aux.phiyy, dt
    )
    if len(packets) == 0:
        new_state = semi_lagrangian_step(state, dt, QUADRATIC, velocity_fn)
        return HybridStepResult(new_state, np.zeros((0, 2)), 0, 0)

    values, reverted = corrected_departure_values(bundle, packets, h)
    n_reverted = int(np.count_nonzero(reverted))
    for p in coords[reverted]:
        logger.debug("reverted prediction at (%.6g, %.6g)", p[0], p[1])
    if n_reverted > REVERSION_WARNING_SHARE * len(packets):
        logger.warning(
            "%d of %d neural predictions reverted at t=%.6g", n_reverted, len(packets), state.time
        )

    keep = ~reverted
    overrides = NodeOverrides.from_coords(grid, coords[keep], values[keep])
    new_state = semi_lagrangian_step(state, dt, QUADRATIC, velocity_fn, overrides=overrides)
    protected = protected_coords(new_state.grid, overrides, new_state.phi, aux.normals, state.vel)
    return HybridStepResult(new_state, protected, len(packets), n_reverted)


def simulate_hybrid(
    bundle: ModelBundle,
    initial: SimulationState,
    velocity_fn: VelocityFunction,
    t_end: float,
    nu: int,
    cfl: float = 1.0,
    observer: Optional[Observer] = None,
    keep_states: bool = True,
    max_velocity: Optional[float] = None,
) -> List[SimulationState]:
    """
    Alternate neural and numerical steps from initial to t_end.

    Even, full-length steps use ml_semi_lagrangian followed by a selective
    reinitialization that holds the protected vertices; odd steps and a
    truncated final step use the numerical step and a full reinitialization.

    Returns:
        List[SimulationState]: Trajectory starting with the initial state
    """
    nu = validate_iterations(nu)
    dt = step_size(initial, cfl, max_velocity)
    check_preconditions(bundle, initial, dt)
    # step size is fixed by the initial grid
    peak = cfl * initial.grid.h_min / dt
    states = [initial]
    state = initial
    for k, step, truncated in time_steps(initial.time, t_end, dt):
        if k % 2 == 0 and not truncated:
            result = ml_semi_lagrangian(
                bundle, state, cfl=cfl, velocity_fn=velocity_fn, max_velocity=peak
            )
            phi = selective_reinitialize(result.state.phi, result.protected, nu)
            state = SimulationState(
                result.state.grid, phi, result.state.vel, result.state.time, result.state.iter
            )
            diagnostics = StepDiagnostics(
                iteration=state.iter,
                time=state.time,
                packets=result.packets,
                reversions=result.reversions,
                ml_applied=True,
            )
        else:
            state = semi_lagrangian_step(state, step, QUADRATIC, velocity_fn)
            state = SimulationState(
                state.grid, reinitialize(state.phi, nu), state.vel, state.time, state.iter
            )
            diagnostics = StepDiagnostics(iteration=state.iter, time=state.time)
        if observer is not None:
            observer(state, diagnostics)
        if keep_states:
            states.append(state)
    if not keep_states and state is not initial:
        states.append(state)
    if len(states) > 1:
        states[-1] = pin_time(states[-1], t_end)
    return states
