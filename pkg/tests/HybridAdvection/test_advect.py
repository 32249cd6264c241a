"""Unit tests for semi-Lagrangian transport."""

import math

import numpy as np
import pytest

from HybridAdvection.advect import (
    NodeOverrides,
    advect_coarse_grid,
    advect_fine_grid,
    departure_point,
    departure_points,
    fit_to_fine_grid,
    initial_state,
    regrid,
    semi_lagrangian_step,
    simulate_numerical,
    step_size,
    time_steps,
)
from HybridAdvection.benchmarks import rotation_grid, rotation_velocity
from HybridAdvection.constants import ROTATION_CENTER, ROTATION_RADIUS
from HybridAdvection.errors import RegridError
from HybridAdvection.field_ops import second_derivatives
from HybridAdvection.interp import QUADRATIC, sample
from HybridAdvection.metrics import area_quadrature, circle_sdf
from HybridAdvection.models import GridConfig
from HybridAdvection.quadtree import QuadtreeGrid, build_grid


@pytest.fixture
def circle_state(grid_config, circle, zero_velocity):
    return initial_state(grid_config, circle, zero_velocity)


class TestDeparturePoints:
    """Tests for departure point backtracking."""

    def test_constant_flow(self, grid_config, circle):
        """Test the two-stage backtrack in a constant flow."""
        flow = lambda p: np.tile([1.0, 0.0], (len(p), 1))  # noqa: E731
        state = initial_state(grid_config, circle, flow)
        h = state.grid.h_min
        point = departure_point(state, (0.0, 0.0), h)
        np.testing.assert_allclose(point.x_hat, [-0.5 * h, 0.0])
        np.testing.assert_allclose(point.x_d, [-h, 0.0])
        np.testing.assert_allclose(point.u_hat, [1.0, 0.0])
        assert point.valid

    def test_zero_flow(self, circle_state):
        """Test that a resting fluid leaves points in place."""
        coords = circle_state.grid.node_coords
        _, x_d, _, valid = departure_points(circle_state, coords, 0.1)
        np.testing.assert_array_equal(x_d, coords)
        assert valid.all()

    def test_rotation_midpoint(self, circle):
        """Test the rotation flow against a direct evaluation of the midpoint rule."""
        state = initial_state(rotation_grid(6), circle, rotation_velocity)
        dt = 2.0**-6
        x_a = np.asarray([0.0, 0.75])
        u_a = np.asarray([-x_a[1], x_a[0]]) / math.sqrt(2.0)
        x_hat = x_a - 0.5 * dt * u_a
        u_hat = np.asarray([-x_hat[1], x_hat[0]]) / math.sqrt(2.0)
        point = departure_point(state, tuple(x_a), dt)
        np.testing.assert_allclose(point.x_hat, x_hat, atol=1e-14)
        np.testing.assert_allclose(point.x_d, x_a - dt * u_hat, atol=1e-14)

    def test_departure_within_one_cell(self, circle):
        """Test that unit speed and dt = h keep departure points within a diagonal."""
        state = initial_state(rotation_grid(5), circle, rotation_velocity)
        h = state.grid.h_min
        coords = state.grid.node_coords
        _, x_d, _, _ = departure_points(state, coords, h)
        assert np.all(np.linalg.norm(x_d - coords, axis=1) <= math.sqrt(2.0) * h)

    def test_outside_departures_flagged(self, grid_config, circle):
        """Test that departures leaving the domain are marked invalid."""
        flow = lambda p: np.tile([1.0, 0.0], (len(p), 1))  # noqa: E731
        state = initial_state(grid_config, circle, flow)
        _, _, _, valid = departure_points(state, np.asarray([[-1.0, 0.0], [0.5, 0.0]]), 0.1)
        assert valid.tolist() == [False, True]

    def test_rejects_non_positive_dt(self, circle_state):
        """Test that dt must be positive."""
        with pytest.raises(ValueError, match="dt"):
            departure_points(circle_state, np.zeros((1, 2)), 0.0)

    def test_two_frame_extrapolation(self, grid_config, circle):
        """Test that a previous state extrapolates the midpoint velocity."""
        now = initial_state(grid_config, circle, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
        before = initial_state(grid_config, circle, lambda p: np.tile([0.5, 0.0], (len(p), 1)))
        _, _, u_hat, _ = departure_points(now, np.zeros((1, 2)), 0.01, prev_state=before)
        np.testing.assert_allclose(u_hat, [[1.25, 0.0]])


class TestSemiLagrangianStep:
    """Tests for semi_lagrangian_step."""

    def test_zero_velocity_fixed_point(self, circle_state):
        """Test that a resting fluid keeps both grid and level-set."""
        nxt = semi_lagrangian_step(circle_state, 0.05)
        assert nxt.grid.same_leaves(circle_state.grid)
        np.testing.assert_allclose(
            nxt.phi.values, circle_state.grid.constrain(circle_state.phi.values), atol=1e-14
        )
        assert nxt.time == pytest.approx(0.05)
        assert nxt.iter == 1

    def test_translates_plane(self, grid_config):
        """Test that a planar level-set is translated exactly."""
        flow = lambda p: np.tile([1.0, 0.0], (len(p), 1))  # noqa: E731
        plane = lambda p: p[:, 0] - 0.2  # noqa: E731
        state = initial_state(grid_config, plane, flow)
        h = state.grid.h_min
        nxt = semi_lagrangian_step(state, h, velocity_fn=flow)
        x = nxt.grid.node_coords[:, 0]
        inside = x >= -0.5
        np.testing.assert_allclose(nxt.phi.values[inside], x[inside] - 0.2 - h, atol=1e-12)

    def test_bilinear_mode(self, circle_state):
        """Test that the bilinear rule is accepted."""
        nxt = semi_lagrangian_step(circle_state, 0.05, mode="bilinear")
        assert nxt.grid.same_leaves(circle_state.grid)

    def test_velocity_follows_new_grid(self, grid_config, circle, uniform_flow):
        """Test that the velocity is re-evaluated on the new grid."""
        state = initial_state(grid_config, circle, uniform_flow)
        nxt = semi_lagrangian_step(state, state.grid.h_min, velocity_fn=uniform_flow)
        assert nxt.vel.grid is nxt.grid
        np.testing.assert_allclose(nxt.vel.values, nxt.grid.evaluate(uniform_flow))

    def test_overrides_are_pinned(self, circle_state):
        """Test that pinned vertices hold their values after the step."""
        coords = circle_state.grid.node_coords[:5]
        pins = NodeOverrides.from_coords(circle_state.grid, coords, np.full(5, 7.0))
        nxt = semi_lagrangian_step(circle_state, 0.05, overrides=pins)
        idx = nxt.grid.node_index(coords)
        np.testing.assert_array_equal(nxt.phi.values[idx], 7.0)


class TestRegrid:
    """Tests for the regrid loop."""

    def test_converges_to_built_grid(self, grid_config, circle):
        """Test that regridding a uniform grid around a circle reaches the built grid."""
        start = QuadtreeGrid.uniform(grid_config)
        grid, values = regrid(start, lambda g: g.evaluate(circle))
        assert grid.same_leaves(build_grid(grid_config, circle))
        assert values.shape == (grid.n_nodes,)

    def test_oscillation_raises(self):
        """Test that a leaf set that never settles raises RegridError."""
        cfg = GridConfig((0.0, 0.0), (1.0, 1.0), (1, 1), 3)
        start = QuadtreeGrid(cfg, [0], [0], [0])

        def flip(grid):
            return np.zeros(grid.n_nodes) if grid.n_leaves == 1 else np.full(grid.n_nodes, 100.0)

        with pytest.raises(RegridError, match="did not converge"):
            regrid(start, flip)

    def test_pinned_values_are_a_fixed_point(self, circle_state, circle):
        """Test that applying overrides again leaves regridded values unchanged."""
        grid = circle_state.grid
        values = circle_state.phi.values
        near = np.abs(values) < 2.0 * grid.h_min
        pins = NodeOverrides.from_coords(grid, grid.node_coords[near], 1.001 * values[near])

        once = pins.apply(grid, values)
        assert not np.array_equal(once, values)
        np.testing.assert_array_equal(pins.apply(grid, once), once)

        grid, regridded = regrid(grid, lambda g: g.evaluate(circle), pins)
        np.testing.assert_array_equal(pins.apply(grid, regridded), regridded)


class TestTimeSteps:
    """Tests for time_steps."""

    def test_truncates_last_step(self):
        """Test that the last step lands exactly on t_end."""
        steps = list(time_steps(0.0, 1.0, 0.3))
        assert len(steps) == 4
        assert steps[-1][1] == pytest.approx(0.1)
        assert steps[-1][2] is True
        assert all(not truncated for _, _, truncated in steps[:-1])

    def test_exact_multiple(self):
        """Test that exact multiples have no truncated step."""
        steps = list(time_steps(0.0, 1.0, 0.25))
        assert len(steps) == 4
        assert not any(truncated for _, _, truncated in steps)

    def test_empty_interval(self):
        """Test that an empty interval yields nothing."""
        assert list(time_steps(1.0, 1.0, 0.1)) == []


class TestStepSize:
    """Tests for step_size."""

    def test_unit_speed(self, circle):
        """Test that unit peak speed and cfl = 1 give dt = h."""
        state = initial_state(rotation_grid(5), circle, rotation_velocity)
        assert step_size(state, 1.0, max_velocity=1.0) == state.grid.h_min

    def test_nodal_speed(self, grid_config, circle, uniform_flow):
        """Test that the nodal peak speed is used by default."""
        state = initial_state(grid_config, circle, uniform_flow)
        expected = 0.5 * state.grid.h_min / math.hypot(1.0, 0.5)
        assert step_size(state, 0.5) == pytest.approx(expected)

    def test_resting_fluid(self, circle_state):
        """Test that zero velocity falls back to dt = cfl * h."""
        assert step_size(circle_state, 1.0) == circle_state.grid.h_min

    def test_rejects_bad_cfl(self, circle_state):
        """Test that the Courant number must be positive."""
        with pytest.raises(ValueError, match="cfl"):
            step_size(circle_state, 0.0)


class TestSimulateNumerical:
    """Tests for simulate_numerical."""

    def test_trajectory_ends_at_t_end(self, circle_state, zero_velocity):
        """Test step count, observer calls and the final time."""
        seen = []
        h = circle_state.grid.h_min
        states = simulate_numerical(
            circle_state, zero_velocity, 2.5 * h, nu=2,
            observer=lambda state, diag: seen.append(diag.iteration),
        )
        assert len(states) == 4
        assert seen == [1, 2, 3]
        assert states[-1].time == 2.5 * h

    def test_keep_only_ends(self, circle_state, zero_velocity):
        """Test that keep_states=False keeps the first and last states."""
        h = circle_state.grid.h_min
        states = simulate_numerical(circle_state, zero_velocity, 3 * h, nu=0, keep_states=False)
        assert len(states) == 2
        assert states[-1].iter == 3

    def test_rotation_keeps_area(self):
        """Test that eight rotation steps with reinitialization lose under 1% of the disk."""
        exact = circle_sdf(ROTATION_CENTER, ROTATION_RADIUS)
        state = initial_state(rotation_grid(6), exact, rotation_velocity)
        h = state.grid.h_min
        start = area_quadrature(state)

        states = simulate_numerical(
            state, rotation_velocity, 8 * h, nu=10, keep_states=False, max_velocity=1.0
        )

        assert states[-1].iter == 8
        assert abs(area_quadrature(states[-1]) / start - 1.0) < 0.01


class TestFineAndCoarseDrivers:
    """Tests for the data-pipeline drivers."""

    def test_fine_identity_on_empty_interval(self, circle_state, zero_velocity):
        """Test that t_end = t_start leaves the fine state unchanged."""
        out = advect_fine_grid(circle_state, 0.0, 0.0, 10, zero_velocity, 1.0, 2.0)
        assert out is circle_state

    def test_fine_sub_steps(self, circle, zero_velocity):
        """Test that one coarse interval takes four fine sub-steps."""
        fine_cfg = GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), 6)
        fine = initial_state(fine_cfg, circle, zero_velocity)
        h_c = 4.0 * fine.grid.h_min
        out = advect_fine_grid(fine, 0.0, h_c, 1, zero_velocity, 1.0, 2.0)
        assert out.iter == 4
        assert out.time == h_c

    def test_reset_branch(self, circle_state, circle, zero_velocity):
        """Test that the reset branch matches per-node quadratic samples of the fine field."""
        fine_cfg = GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), 6)
        fine = initial_state(fine_cfg, circle_sdf((0.05, 0.0), 0.4), zero_velocity)
        reset = fit_to_fine_grid(circle_state, fine)
        phixx, phiyy = second_derivatives(fine.phi)
        coords = reset.grid.node_coords
        free = ~reset.grid.hanging_mask
        expected = sample(fine.phi, coords[free], QUADRATIC, phixx, phiyy)
        np.testing.assert_allclose(reset.phi.values[free], expected, atol=1e-14)
        assert reset.time == fine.time

    def test_reset_predicate(self, circle_state, zero_velocity):
        """Test that the reset runs when r_freq divides iteration + 1."""
        h = circle_state.grid.h_min
        fine_cfg = GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), 6)
        fine = initial_state(fine_cfg, circle_sdf((0.0, 0.0), 0.4), zero_velocity)
        fine = advect_fine_grid(fine, 0.0, h, 0, zero_velocity, 1.0, 1.0)
        reset = advect_coarse_grid(circle_state, fine, 0, iteration=2, r_freq=3)
        advected = advect_coarse_grid(circle_state, fine, 0, iteration=0, r_freq=3)
        assert reset.time == advected.time == fine.time
        phixx, phiyy = second_derivatives(fine.phi)
        free = ~reset.grid.hanging_mask
        coords = reset.grid.node_coords[free]
        np.testing.assert_allclose(
            reset.phi.values[free], sample(fine.phi, coords, QUADRATIC, phixx, phiyy), atol=1e-14
        )

    def test_rejects_bad_reset_frequency(self, circle_state):
        """Test that r_freq must be positive."""
        with pytest.raises(ValueError, match="r_freq"):
            advect_coarse_grid(circle_state, circle_state, 0, iteration=0, r_freq=0)


class TestInitialState:
    """Tests for initial_state."""

    def test_fields_on_grid(self, grid_config, circle, uniform_flow):
        """Test that the level-set and velocity are sampled on the built grid."""
        state = initial_state(grid_config, circle, uniform_flow)
        assert state.time == 0.0
        assert state.iter == 0
        np.testing.assert_array_equal(state.phi.values, state.grid.evaluate(circle))
