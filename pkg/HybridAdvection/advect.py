"""
Semi-Lagrangian transport of level-set fields on quadtree grids.

Contains the two-stage backtracking of grid vertices, one full update with
iterative regridding, and the fine/coarse drivers of the data pipeline.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from HybridAdvection.errors import RegridError
from HybridAdvection.field_ops import (
    coords_with_negative_flow,
    reinitialize,
    second_derivatives,
    selective_reinitialize,
)
from HybridAdvection.interp import BILINEAR, QUADRATIC, sample
from HybridAdvection.models import (
    GridConfig,
    ScalarField,
    SimulationState,
    StepDiagnostics,
    VectorField,
)
from HybridAdvection.quadtree import LevelSetFunction, QuadtreeGrid, build_grid
from HybridAdvection.validators import validate_iterations, validate_positive

logger = logging.getLogger(__name__)

VelocityFunction = Callable[[np.ndarray], np.ndarray]
Observer = Callable[[SimulationState, StepDiagnostics], None]

# Relative slack when comparing step sizes and end times
TIME_TOL = 1e-9


class DeparturePoint(NamedTuple):
    x_hat: np.ndarray
    x_d: np.ndarray
    u_hat: np.ndarray
    valid: bool


def departure_points(
    state: SimulationState,
    coords: np.ndarray,
    dt: float,
    prev_state: Optional[SimulationState] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Backtrack arrival points through the state's velocity.

    x_hat = x_a - dt/2 u(x_a) and x_d = x_a - dt u(x_hat), with velocity
    sampled bilinearly from the state's grid. When prev_state is given the
    midpoint velocity is extrapolated as 1.5 u^n - 0.5 u^{n-1}.

    Args:
        state: State carrying the velocity
        coords: Arrival points, shape (m, 2)
        dt: Time step
        prev_state: Previous state for two-frame extrapolation

    Returns:
        Tuple: (x_hat, x_d, u_hat, valid) where valid marks points whose
        midpoint and departure point both lie inside the domain
    """
    validate_positive(dt, "dt")
    grid = state.grid
    coords = np.asarray(coords, dtype=np.float64)
    u_a = sample(state.vel, coords, BILINEAR, clamp=True)
    x_hat = coords - 0.5 * dt * u_a
    u_hat = sample(state.vel, x_hat, BILINEAR, clamp=True)
    if prev_state is not None:
        u_hat = 1.5 * u_hat - 0.5 * sample(prev_state.vel, x_hat, BILINEAR, clamp=True)
    x_d = coords - dt * u_hat
    valid = grid.contains(x_hat) & grid.contains(x_d)
    return x_hat, x_d, u_hat, valid


def departure_point(
    state: SimulationState, node: Tuple[float, float], dt: float
) -> DeparturePoint:
    """Single-point version of departure_points."""
    x_hat, x_d, u_hat, valid = departure_points(state, np.asarray([node]), dt)
    return DeparturePoint(x_hat[0], x_d[0], u_hat[0], bool(valid[0]))


@dataclass(frozen=True, eq=False)
class NodeOverrides:
    """
    Level-set values pinned to lattice coordinates during regridding.

    Attributes:
        keys (np.ndarray): Sorted lattice keys of the pinned vertices
        values (np.ndarray): Pinned values, aligned with keys
    """

    keys: np.ndarray
    values: np.ndarray

    @classmethod
    def from_coords(
        cls, grid: QuadtreeGrid, coords: np.ndarray, values: np.ndarray
    ) -> "NodeOverrides":
        keys = grid.lattice_keys(coords) if len(coords) else np.zeros(0, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        order = np.argsort(keys, kind="stable")
        return cls(keys[order], values[order])

    @classmethod
    def empty(cls) -> "NodeOverrides":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    def __len__(self) -> int:
        return int(self.keys.shape[0])

    def coords(self, grid: QuadtreeGrid) -> np.ndarray:
        return grid.keys_to_coords(self.keys)

    def apply(self, grid: QuadtreeGrid, node_values: np.ndarray) -> np.ndarray:
        """Copy of node_values with every pinned vertex present on grid overwritten."""
        out = np.array(node_values, dtype=np.float64)
        if len(self) == 0:
            return out
        idx = grid.lookup_keys(self.keys)
        present = idx >= 0
        out[idx[present]] = self.values[present]
        return out


def regrid(
    initial_grid: QuadtreeGrid,
    node_values_fn: Callable[[QuadtreeGrid], np.ndarray],
    overrides: Optional[NodeOverrides] = None,
) -> Tuple[QuadtreeGrid, np.ndarray]:
    """
    Refine and coarsen until the leaf set is stable.

    Each sweep evaluates node_values_fn on the candidate grid, pins the
    overrides, and applies one refine/coarsen pass.

    Returns:
        Tuple[QuadtreeGrid, np.ndarray]: Converged grid and its nodal values

    Raises:
        RegridError: If the leaf set still changes after l_max + 2 sweeps
    """
    grid = initial_grid
    max_sweeps = initial_grid.l_max + 2
    for sweep in range(1, max_sweeps + 1):
        values = node_values_fn(grid)
        if overrides is not None:
            values = overrides.apply(grid, values)
        candidate = grid.refine_and_coarsen(values)
        if candidate.same_leaves(grid):
            logger.debug("regrid converged after %d sweep(s), %d leaves", sweep, grid.n_leaves)
            return grid, values
        grid = candidate
    raise RegridError(f"regridding did not converge within {max_sweeps} sweeps")


def _velocity_on(
    grid: QuadtreeGrid,
    velocity_fn: Optional[VelocityFunction],
    source: VectorField,
) -> VectorField:
    if velocity_fn is not None:
        return VectorField(grid, grid.evaluate(velocity_fn))
    return VectorField(grid, sample(source, grid.node_coords, BILINEAR, clamp=True))


def semi_lagrangian_step(
    state: SimulationState,
    dt: float,
    mode: str = QUADRATIC,
    velocity_fn: Optional[VelocityFunction] = None,
    prev_state: Optional[SimulationState] = None,
    overrides: Optional[NodeOverrides] = None,
) -> SimulationState:
    """
    Advance the level-set by one semi-Lagrangian step.

    New nodal values are phi^n(x_d), interpolated from the old grid; the grid
    is rebuilt around them until the leaf set no longer changes. Velocity is
    always backtracked through the old grid.

    Args:
        state: Current state
        dt: Time step
        mode: Interpolation rule for phi ("quadratic" or "bilinear")
        velocity_fn: Analytic velocity evaluated on the new grid; when None
            the old velocity is interpolated
        prev_state: Previous state for two-frame velocity extrapolation
        overrides: Values pinned at given vertices after every interpolation pass

    Returns:
        SimulationState: State at time + dt

    Raises:
        RegridError: If regridding does not converge
    """
    validate_positive(dt, "dt")
    if mode == QUADRATIC:
        phixx, phiyy = second_derivatives(state.phi)
    else:
        phixx = phiyy = None

    def backtracked_values(grid: QuadtreeGrid) -> np.ndarray:
        _, x_d, _, _ = departure_points(state, grid.node_coords, dt, prev_state)
        return sample(state.phi, x_d, mode, phixx, phiyy, clamp=True)

    grid, values = regrid(state.grid, backtracked_values, overrides)
    values = grid.constrain(values)
    if overrides is not None:
        values = overrides.apply(grid, values)
    return SimulationState(
        grid=grid,
        phi=ScalarField(grid, values),
        vel=_velocity_on(grid, velocity_fn, state.vel),
        time=state.time + dt,
        iter=state.iter + 1,
    )


def fit_to_fine_grid(
    coarse: SimulationState,
    fine: SimulationState,
    velocity_fn: Optional[VelocityFunction] = None,
) -> SimulationState:
    """
    Reset a coarse state to the fine state's level-set.

    Coarse nodal values become quadratic samples of the fine field; the coarse
    grid is regridded around them. Time is taken from the fine state.
    """
    phixx, phiyy = second_derivatives(fine.phi)

    def fine_values(grid: QuadtreeGrid) -> np.ndarray:
        return sample(fine.phi, grid.node_coords, QUADRATIC, phixx, phiyy, clamp=True)

    grid, values = regrid(coarse.grid, fine_values)
    return SimulationState(
        grid=grid,
        phi=ScalarField(grid, grid.constrain(values)),
        vel=_velocity_on(grid, velocity_fn, fine.vel),
        time=fine.time,
        iter=coarse.iter + 1,
    )


def time_steps(t_start: float, t_end: float, dt: float) -> Iterator[Tuple[int, float, bool]]:
    """
    Yield (index, step size, truncated) covering [t_start, t_end].

    All steps have size dt except possibly the last, which is shortened to end
    exactly at t_end and reported as truncated.
    """
    validate_positive(dt, "dt")
    span = t_end - t_start
    if span <= 0:
        return
    n_steps = max(1, math.ceil(span / dt - TIME_TOL))
    for k in range(n_steps):
        if k < n_steps - 1:
            yield k, dt, False
        else:
            last = span - (n_steps - 1) * dt
            truncated = last < dt * (1.0 - TIME_TOL)
            yield k, (last if truncated else dt), truncated


def pin_time(state: SimulationState, time: float) -> SimulationState:
    return SimulationState(state.grid, state.phi, state.vel, time, state.iter)


def advect_fine_grid(
    fine_state: SimulationState,
    t_start: float,
    t_end: float,
    nu: int,
    velocity_fn: VelocityFunction,
    b_c: float,
    b_f: float,
    cfl: float = 1.0,
) -> SimulationState:
    """
    Advance the fine grid from t_start to t_end.

    Each sub-step uses dt_f = cfl * h_f (the last one truncated to land on
    t_end) and is followed by round(b_c * nu) reinitialization iterations, or
    round(b_f * nu) after the final sub-step.

    Returns:
        SimulationState: Fine state at exactly t_end
    """
    nu = validate_iterations(nu)
    dt_f = cfl * fine_state.grid.h_min
    state = fine_state
    steps = list(time_steps(t_start, t_end, dt_f))
    for k, dt, _ in steps:
        state = semi_lagrangian_step(state, dt, velocity_fn=velocity_fn)
        last = k == len(steps) - 1
        iterations = int(round((b_f if last else b_c) * nu))
        state = SimulationState(
            state.grid, reinitialize(state.phi, iterations), state.vel, state.time, state.iter
        )
    if steps:
        state = pin_time(state, t_end)
    return state


def protected_coords(
    grid: QuadtreeGrid,
    overrides: NodeOverrides,
    phi_next: ScalarField,
    normals_prev: VectorField,
    vel_prev: VectorField,
) -> np.ndarray:
    """
    Pinned vertices of grid that also lag behind the interface.

    Returns:
        np.ndarray: Coordinates of the intersection, shape (m, 2)
    """
    if len(overrides) == 0:
        return np.zeros((0, 2))
    lagging = coords_with_negative_flow(phi_next, normals_prev, vel_prev)
    if len(lagging) == 0:
        return np.zeros((0, 2))
    keys = np.intersect1d(overrides.keys, grid.lattice_keys(lagging))
    keys = keys[grid.lookup_keys(keys) >= 0]
    return grid.keys_to_coords(keys)


def advect_coarse_grid(
    coarse_state: SimulationState,
    fine_state_next: SimulationState,
    nu: int,
    iteration: int,
    r_freq: int,
    velocity_fn: Optional[VelocityFunction] = None,
    overrides: Optional[NodeOverrides] = None,
    normals_prev: Optional[VectorField] = None,
) -> SimulationState:
    """
    Advance the coarse grid to the fine grid's time.

    Every r_freq-th iteration (when r_freq divides iteration + 1) the coarse
    field is reset from the fine one; otherwise a semi-Lagrangian step covers
    the interval, with overrides pinned during regridding. Either branch ends
    with nu reinitialization iterations; pinned vertices lagging behind the
    interface (judged with normals_prev) are held fixed while reinitializing.

    Returns:
        SimulationState: Coarse state at fine_state_next.time
    """
    nu = validate_iterations(nu)
    if r_freq < 1:
        raise ValueError(f"r_freq must be positive, got {r_freq}")
    protected = np.zeros((0, 2))
    if (iteration + 1) % r_freq == 0:
        state = fit_to_fine_grid(coarse_state, fine_state_next, velocity_fn)
    else:
        dt = fine_state_next.time - coarse_state.time
        state = semi_lagrangian_step(
            coarse_state, dt, velocity_fn=velocity_fn, overrides=overrides
        )
        state = pin_time(state, fine_state_next.time)
        if overrides is not None and normals_prev is not None:
            protected = protected_coords(
                state.grid, overrides, state.phi, normals_prev, coarse_state.vel
            )
    if len(protected):
        phi = selective_reinitialize(state.phi, protected, nu)
    else:
        phi = reinitialize(state.phi, nu)
    return SimulationState(state.grid, phi, state.vel, state.time, state.iter)


def initial_state(
    config: GridConfig,
    phi_fn: LevelSetFunction,
    velocity_fn: VelocityFunction,
    nu: int = 0,
) -> SimulationState:
    """
    Build a grid around phi_fn and sample the starting fields.

    Args:
        config: GridConfig of the grid
        phi_fn: Level-set function of points
        velocity_fn: Velocity function of points
        nu: Reinitialization iterations applied to the sampled level-set
    """
    grid = build_grid(config, phi_fn)
    phi = ScalarField(grid, grid.evaluate(phi_fn))
    if nu:
        phi = reinitialize(phi, nu)
    return SimulationState(grid, phi, VectorField(grid, grid.evaluate(velocity_fn)))


def max_speed(vel: VectorField) -> float:
    return float(np.max(np.linalg.norm(vel.values, axis=1))) if len(vel.values) else 0.0


def step_size(state: SimulationState, cfl: float, max_velocity: Optional[float] = None) -> float:
    """cfl * h_min / max|u| (max|u| = 1 when the velocity vanishes)."""
    validate_positive(cfl, "cfl")
    if max_velocity is None:
        vmax = max_speed(state.vel)
    else:
        vmax = validate_positive(max_velocity, "max_velocity")
    return cfl * state.grid.h_min / (vmax if vmax > 0 else 1.0)


def simulate_numerical(
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
    Plain semi-Lagrangian pipeline: one step plus full reinitialization.

    The step size is cfl * h_min / max|u|, with max|u| taken from the initial
    nodal velocity unless max_velocity is given. The last step is truncated
    at t_end.

    Args:
        initial: Starting state
        velocity_fn: Analytic velocity
        t_end: Final time
        nu: Reinitialization iterations per step
        cfl: Courant number
        observer: Called with (state, diagnostics) after every step
        keep_states: Keep every intermediate state; otherwise only the first and last
        max_velocity: Known peak speed of velocity_fn

    Returns:
        List[SimulationState]: Trajectory starting with the initial state
    """
    nu = validate_iterations(nu)
    dt = step_size(initial, cfl, max_velocity)
    states = [initial]
    state = initial
    for _, step, _ in time_steps(initial.time, t_end, dt):
        state = semi_lagrangian_step(state, step, velocity_fn=velocity_fn)
        state = SimulationState(
            state.grid, reinitialize(state.phi, nu), state.vel, state.time, state.iter
        )
        if observer is not None:
            observer(state, StepDiagnostics(iteration=state.iter, time=state.time))
        if keep_states:
            states.append(state)
    if not keep_states and state is not initial:
        states.append(state)
    if len(states) > 1:
        states[-1] = pin_time(states[-1], t_end)
    return states
