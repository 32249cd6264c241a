"""Tests for the rotation and vortex benchmarks."""

import math

import numpy as np
import pandas as pd
import pytest
import torch

from config.settings import BenchConfig, GenerationConfig, TrainConfig
from HybridAdvection.advect import initial_state
from HybridAdvection.benchmarks import (
    DIAGNOSTIC_COLUMNS,
    HYBRID,
    NUMERICAL,
    BenchmarkRun,
    rotated_circle_sdf,
    rotation_grid,
    rotation_velocity,
    run_rotation,
    run_vortex,
    vortex_grid,
    vortex_velocity,
    write_outputs,
)
from HybridAdvection.constants import (
    PACKET_SIZE,
    ROTATION_CENTER,
    ROTATION_PERIOD,
    ROTATION_RADIUS,
)
from HybridAdvection.dataset import generate_dataset, stratified_split
from HybridAdvection.metrics import circle_sdf, disk_area, measure
from HybridAdvection.neural import (
    MlpModel,
    ModelBundle,
    evaluate,
    evaluate_baseline,
    fit_bundle,
    split_inputs,
)
from HybridAdvection.plots import AREA_COLUMNS
from HybridAdvection.preprocess import fit


class TestVelocityFields:
    """Tests for the benchmark flows."""

    def test_rotation_speed(self, rng):
        """Test that the rotation has speed |x| / sqrt(2) and peaks at 1 in the domain."""
        points = rng.uniform(-1.0, 1.0, (100, 2))
        speed = np.linalg.norm(rotation_velocity(points), axis=1)
        np.testing.assert_allclose(speed, np.linalg.norm(points, axis=1) / math.sqrt(2.0))
        corner = rotation_velocity(np.asarray([[1.0, 1.0]]))
        assert np.linalg.norm(corner) == pytest.approx(1.0)

    def test_vortex_vanishes_on_walls(self):
        """Test that the vortex has no normal flow through the unit square walls."""
        t = np.linspace(0.0, 1.0, 11)
        left = vortex_velocity(np.stack([np.zeros_like(t), t], axis=1))
        bottom = vortex_velocity(np.stack([t, np.zeros_like(t)], axis=1))
        np.testing.assert_allclose(left[:, 0], 0.0, atol=1e-15)
        np.testing.assert_allclose(bottom[:, 1], 0.0, atol=1e-15)

    def test_rotated_circle_returns_after_period(self, rng):
        """Test that the exact rotation solution is periodic."""
        points = rng.uniform(-1.0, 1.0, (50, 2))
        start = circle_sdf(ROTATION_CENTER, ROTATION_RADIUS)
        np.testing.assert_allclose(
            rotated_circle_sdf(ROTATION_PERIOD)(points), start(points), atol=1e-12
        )
        quarter = rotated_circle_sdf(ROTATION_PERIOD / 4)
        assert quarter(np.asarray([[-0.75, 0.0]]))[0] == pytest.approx(-ROTATION_RADIUS)

    def test_grids(self):
        """Test the benchmark domains."""
        assert rotation_grid(6).h_min == 2.0**-6
        assert vortex_grid(6).h_min == 2.0**-6
        assert vortex_grid(6, band=2.0).band_halfwidth == 2.0


class TestRuns:
    """Tests for short benchmark runs."""

    def test_unknown_method(self):
        """Test that unknown methods are rejected."""
        with pytest.raises(ValueError, match="method must be one of"):
            run_rotation("spectral", 5)

    def test_hybrid_needs_model(self):
        """Test that the hybrid method requires a bundle."""
        with pytest.raises(ValueError, match="trained model"):
            run_vortex("hybrid", 5)

    def test_short_vortex(self):
        """Test a short forward and backward vortex run with diagnostics."""
        config = BenchConfig(nu=5, t_mid=2.0 / 32)
        run = run_vortex(NUMERICAL, 5, config, diagnostics=True)
        assert run.method == NUMERICAL
        assert len(run.reports) == 1
        assert run.reports[0].time == pytest.approx(4.0 / 32)
        assert run.reports[0].wall_time_s > 0
        assert run.snapshots["t_mid"].time == pytest.approx(2.0 / 32)
        assert list(run.areas.columns) == AREA_COLUMNS
        assert len(run.areas) == 5
        assert run.areas["normalized_area"].iloc[0] == pytest.approx(1.0, rel=1e-2)
        assert list(run.diagnostics.columns) == DIAGNOSTIC_COLUMNS
        assert len(run.diagnostics) == 4
        assert abs(run.reports[0].area_loss_pct) < 5.0


class TestWriteOutputs:
    """Tests for benchmark output files."""

    @pytest.fixture
    def run(self, zero_velocity):
        exact = circle_sdf(ROTATION_CENTER, ROTATION_RADIUS)
        state = initial_state(rotation_grid(5, 2.0), exact, zero_velocity)
        report = measure(state, exact, disk_area(ROTATION_RADIUS), label="revolution 1")
        report.wall_time_s = 1.5
        areas = pd.DataFrame([(NUMERICAL, 0.0, 1.0)], columns=AREA_COLUMNS)
        return BenchmarkRun(NUMERICAL, [report], state, exact, {"t_mid": state}, areas)

    def test_files(self, run, tmp_path):
        """Test the set of written files."""
        written = write_outputs(run, str(tmp_path / "out"))
        names = sorted(p.rsplit("/", 1)[-1] for p in written)
        assert names == [
            "area_evolution.svg",
            "contour_final.csv",
            "contour_final.svg",
            "contour_t_mid.csv",
            "reports.csv",
            "timings.csv",
        ]

    def test_reports_are_deterministic(self, run, tmp_path):
        """Test that wall time stays out of reports.csv."""
        write_outputs(run, str(tmp_path))
        reports = pd.read_csv(tmp_path / "reports.csv")
        timings = pd.read_csv(tmp_path / "timings.csv")
        assert "wall_time_s" not in reports.columns
        assert reports["method"].tolist() == [NUMERICAL]
        assert timings["wall_time_s"].tolist() == [1.5]


@pytest.mark.slow
class TestAcceptance:
    """Full-length numerical benchmark runs."""

    def test_rotation_level_6(self):
        """Test one revolution at l_max = 6 against the reference loss and error."""
        report = run_rotation(NUMERICAL, 6).reports[0]
        assert 3.0 <= report.area_loss_pct <= 6.5
        assert 3.380e-3 / 2 <= report.mae <= 3.380e-3 * 2

    def test_rotation_level_7(self):
        """Test that refining to l_max = 7 lowers loss and error."""
        coarse = run_rotation(NUMERICAL, 6).reports[0]
        fine = run_rotation(NUMERICAL, 7).reports[0]
        assert 0.6 <= fine.area_loss_pct <= 2.0
        assert 8.545e-4 / 2 <= fine.mae <= 8.545e-4 * 2
        assert fine.mae < coarse.mae

    def test_vortex_level_6(self):
        """Test the forward and backward vortex at l_max = 6."""
        report = run_vortex(NUMERICAL, 6).reports[0]
        assert 0.6 <= report.area_loss_pct <= 2.0
        assert 1.329e-3 / 2 <= report.mae <= 1.329e-3 * 2


def _pass_through_bundle(l_max):
    """A bundle whose network returns phi_d / h unchanged."""
    h = 2.0**-l_max
    stats, pca = fit(np.random.default_rng(0).normal(size=(500, PACKET_SIZE)), h, 17)
    model = MlpModel(18, 8)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    return ModelBundle(model, stats, pca, h, l_max)


@pytest.fixture(scope="module")
def desk_model():
    """A small model trained on a level-5 to level-7 dataset, with its test split."""
    generation = GenerationConfig(l_c_max=5, l_f_max=7, n_fields=2, n_centers=2, t_end=0.25)
    config = TrainConfig(hidden_units=32, max_epochs=150)
    tuples = generate_dataset(generation)
    splits = stratified_split(tuples, config.fractions, config.discard, config.bins, config.seed)
    bundle, _ = fit_bundle(splits, generation.h_c, generation.l_c_max, config)
    return bundle, split_inputs(splits.test, bundle.stats, bundle.pca, bundle.h)


@pytest.mark.slow
class TestHybridAcceptance:
    """Full-length runs of the hybrid method."""

    def test_pass_through_model_tracks_numerical(self):
        """Test that a model without corrections matches the numerical run within 1e-4 MAE."""
        numerical = run_rotation(NUMERICAL, 6).reports[0]
        hybrid = run_rotation(HYBRID, 6, bundle=_pass_through_bundle(6)).reports[0]
        assert abs(hybrid.mae - numerical.mae) < 1e-4

    def test_learning_improves_on_numerical_estimate(self, desk_model):
        """Test that the trained model cuts the test MAE to a third of phi_d's."""
        bundle, test = desk_model
        assert evaluate(bundle.model, test).mae <= evaluate_baseline(test).mae / 3.0

    def test_hybrid_beats_numerical_rotation(self, desk_model):
        """Test that one hybrid revolution loses less area and error than the numerical one."""
        bundle, _ = desk_model
        numerical = run_rotation(NUMERICAL, 5).reports[0]
        hybrid = run_rotation(HYBRID, 5, bundle=bundle).reports[0]
        assert abs(hybrid.area_loss_pct) < abs(numerical.area_loss_pct)
        assert hybrid.mae < numerical.mae
