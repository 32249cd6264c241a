"""Unit tests for the neural-corrected semi-Lagrangian step."""

import logging

import numpy as np
import pytest
import torch

from HybridAdvection.advect import initial_state, semi_lagrangian_step
from HybridAdvection.constants import COL, PACKET_SIZE
from HybridAdvection.errors import PreconditionError
from HybridAdvection.hybrid import (
    AuxiliaryFields,
    check_preconditions,
    corrected_departure_values,
    guard_predictions,
    ml_semi_lagrangian,
    simulate_hybrid,
)
from HybridAdvection.interp import QUADRATIC
from HybridAdvection.neural import MlpModel, ModelBundle
from HybridAdvection.preprocess import fit
from HybridAdvection.sampling import collect_data_packets

H = 1.0 / 32


@pytest.fixture
def diagonal_flow():
    """Unit-speed constant velocity (0.6, 0.8)."""

    def velocity(points):
        return np.tile([0.6, 0.8], (len(points), 1))

    return velocity


@pytest.fixture
def state(grid_config, circle, diagonal_flow):
    return initial_state(grid_config, circle, diagonal_flow)


def _bundle(rng, l_max=5, bias=0.0):
    """A bundle whose network predicts phi_d / h plus a constant bias."""
    stats, pca = fit(rng.normal(size=(500, PACKET_SIZE)), H, 17)
    model = MlpModel(18, 8)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
        model.linear_layers()[-1].bias.fill_(bias)
    return ModelBundle(model, stats, pca, 2.0**-l_max, l_max)


class TestGuard:
    """Tests for the prediction guard."""

    def test_small_correction_kept(self):
        """Test that corrections within 0.15 h pass."""
        values, reverted = guard_predictions([0.1 * H], [0.0], [0.0], H)
        assert not reverted[0]
        assert values[0] == 0.1 * H

    def test_large_correction_reverted(self):
        """Test that a correction of 0.2 h falls back to phi_d."""
        values, reverted = guard_predictions([0.2 * H], [0.0], [0.0], H)
        assert reverted[0]
        assert values[0] == 0.0

    def test_far_from_arrival_reverted(self):
        """Test that predictions a full cell from phi_a are reverted."""
        values, reverted = guard_predictions([0.95 * H], [0.9 * H], [-0.05 * H], H)
        assert reverted[0]
        assert values[0] == 0.9 * H

    def test_non_finite_reverted(self):
        """Test that NaN predictions are reverted."""
        values, reverted = guard_predictions([np.nan, np.inf], [0.01, 0.02], [0.0, 0.0], H)
        assert np.all(reverted)
        np.testing.assert_array_equal(values, [0.01, 0.02])


class TestPreconditions:
    """Tests for resolution and step-size checks."""

    def test_matching_model_and_step(self, rng, state):
        """Test that a model at the grid resolution with dt = h passes."""
        check_preconditions(_bundle(rng), state, H)

    def test_resolution_mismatch(self, rng, state):
        """Test that a model trained at another level is rejected."""
        with pytest.raises(PreconditionError, match="l_max=6"):
            check_preconditions(_bundle(rng, l_max=6), state, H)

    def test_step_mismatch(self, rng, state):
        """Test that neural steps need dt = h_min."""
        with pytest.raises(PreconditionError, match="dt = h_min"):
            ml_semi_lagrangian(_bundle(rng), state, cfl=0.5)


class TestCorrectedValues:
    """Tests for network predictions on raw packets."""

    def test_identity_network_returns_phi_d(self, rng, state):
        """Test that a pass-through network reproduces phi_d in the packet's own sign."""
        aux = AuxiliaryFields.compute(state.phi)
        packets, _ = collect_data_packets(
            state, aux.normals, aux.curvature, aux.phixx, aux.phiyy, H
        )
        assert len(packets) > 0
        values, _ = corrected_departure_values(_bundle(rng), packets, H)
        np.testing.assert_allclose(values, packets[:, COL["phi_d"]], atol=1e-15)


class TestMlSemiLagrangian:
    """Tests for one neural-corrected step."""

    def test_identity_network_matches_numerical_step(self, rng, state, diagonal_flow):
        """Test that a pass-through network gives the numerical step."""
        result = ml_semi_lagrangian(_bundle(rng), state, velocity_fn=diagonal_flow)
        expected = semi_lagrangian_step(state, H, QUADRATIC, diagonal_flow)
        assert result.packets > 0
        np.testing.assert_array_equal(result.state.grid.node_coords, expected.grid.node_coords)
        np.testing.assert_allclose(result.state.phi.values, expected.phi.values, atol=1e-14)
        assert result.state.time == pytest.approx(H)

    def test_guard_reverts_every_outlier(self, rng, state, diagonal_flow, caplog):
        """Test that predictions offset by 5 h are all reverted and logged."""
        with caplog.at_level(logging.WARNING, logger="HybridAdvection.hybrid"):
            result = ml_semi_lagrangian(_bundle(rng, bias=5.0), state, velocity_fn=diagonal_flow)
        expected = semi_lagrangian_step(state, H, QUADRATIC, diagonal_flow)
        assert result.reversions == result.packets > 0
        assert len(result.protected) == 0
        np.testing.assert_allclose(result.state.phi.values, expected.phi.values, atol=1e-14)
        assert "neural predictions reverted" in caplog.text

    def test_small_bias_is_applied(self, rng, state, diagonal_flow):
        """Test that accepted corrections move the pinned vertices."""
        result = ml_semi_lagrangian(_bundle(rng, bias=0.1), state, velocity_fn=diagonal_flow)
        expected = semi_lagrangian_step(state, H, QUADRATIC, diagonal_flow)
        assert result.reversions < result.packets
        assert not np.allclose(result.state.phi.values, expected.phi.values)

    def test_protected_vertices_are_grid_nodes(self, rng, state, diagonal_flow):
        """Test that protected coordinates are vertices of the new grid."""
        result = ml_semi_lagrangian(_bundle(rng, bias=0.1), state, velocity_fn=diagonal_flow)
        keys = {tuple(p) for p in result.state.grid.node_coords}
        assert all(tuple(p) in keys for p in result.protected)


class TestSimulateHybrid:
    """Tests for the alternating hybrid driver."""

    def test_alternates_neural_and_numerical_steps(self, rng, state, diagonal_flow):
        """Test that even full steps are neural and the final time is pinned."""
        diagnostics = []
        states = simulate_hybrid(
            _bundle(rng),
            state,
            diagonal_flow,
            t_end=3.5 * H,
            nu=5,
            observer=lambda s, d: diagnostics.append(d),
        )
        assert len(states) == 5
        assert [d.ml_applied for d in diagnostics] == [True, False, True, False]
        assert states[-1].time == 3.5 * H
        assert all(np.all(np.isfinite(s.phi.values)) for s in states)

    def test_keep_states_false(self, rng, state, diagonal_flow):
        """Test that only the endpoints are returned without keep_states."""
        states = simulate_hybrid(
            _bundle(rng), state, diagonal_flow, t_end=2 * H, nu=0, keep_states=False
        )
        assert len(states) == 2
        assert states[0] is state

    def test_wrong_resolution(self, rng, state, diagonal_flow):
        """Test that a mismatched model is rejected before stepping."""
        with pytest.raises(PreconditionError):
            simulate_hybrid(_bundle(rng, l_max=6), state, diagonal_flow, t_end=H, nu=0)


class TestSignRestoration:
    """Tests for curvature-sign handling around the network."""

    @pytest.mark.parametrize("orientation", [1.0, -1.0])
    def test_bias_follows_packet_sign(self, rng, grid_config, circle, diagonal_flow, orientation):
        """Test that a bias added in normalized form comes back with each packet's sign."""
        state = initial_state(grid_config, lambda p: orientation * circle(p), diagonal_flow)
        aux = AuxiliaryFields.compute(state.phi)
        packets, _ = collect_data_packets(
            state, aux.normals, aux.curvature, aux.phixx, aux.phiyy, H
        )
        flipped = packets[:, COL["kappa_a"]] > 0
        assert np.all(flipped) if orientation > 0 else not np.any(flipped)

        values, reverted = corrected_departure_values(_bundle(rng, bias=0.05), packets, H)

        kept = ~reverted
        assert np.any(kept)
        expected = packets[:, COL["phi_d"]] + np.where(flipped, -0.05, 0.05) * H
        np.testing.assert_allclose(values[kept], expected[kept], atol=1e-15)

    @pytest.mark.parametrize("orientation", [1.0, -1.0])
    def test_new_state_holds_restored_values(
        self, rng, grid_config, circle, diagonal_flow, orientation
    ):
        """Test that the stepped field carries the sign-restored corrections."""
        state = initial_state(grid_config, lambda p: orientation * circle(p), diagonal_flow)
        bundle = _bundle(rng, bias=0.05)
        aux = AuxiliaryFields.compute(state.phi)
        packets, coords = collect_data_packets(
            state, aux.normals, aux.curvature, aux.phixx, aux.phiyy, H
        )
        values, reverted = corrected_departure_values(bundle, packets, H)

        result = ml_semi_lagrangian(bundle, state, aux=aux, velocity_fn=diagonal_flow)

        grid = result.state.grid
        idx = grid.lookup_keys(grid.lattice_keys(coords[~reverted]))
        assert np.all(idx >= 0)
        np.testing.assert_array_equal(result.state.phi.values[idx], values[~reverted])
