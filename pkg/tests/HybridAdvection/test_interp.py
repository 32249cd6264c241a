"""Unit tests for interpolation."""

import numpy as np
import pytest

from HybridAdvection.errors import OutOfDomainError
from HybridAdvection.interp import bilinear, quadratic, sample
from HybridAdvection.models import GridConfig, LeafCell, ScalarField, VectorField
from HybridAdvection.quadtree import QuadtreeGrid, build_grid


@pytest.fixture
def unit_cell():
    return LeafCell(index=0, level=0, x0=0.0, y0=0.0, width=1.0)


class TestBilinear:
    """Tests for single-cell bilinear interpolation."""

    def test_reproduces_corners(self, unit_cell):
        """Test that corners return their own values."""
        values = [1.0, 2.0, 3.0, 4.0]
        assert bilinear(unit_cell, values, (0.0, 0.0)) == 1.0
        assert bilinear(unit_cell, values, (0.0, 1.0)) == 2.0
        assert bilinear(unit_cell, values, (1.0, 0.0)) == 3.0
        assert bilinear(unit_cell, values, (1.0, 1.0)) == 4.0

    def test_center_is_mean(self, unit_cell):
        """Test that the cell center gets the corner mean."""
        assert bilinear(unit_cell, [1.0, 2.0, 3.0, 6.0], (0.5, 0.5)) == pytest.approx(3.0)

    def test_outside_point_rejected(self, unit_cell):
        """Test that points outside the cell raise ValueError."""
        with pytest.raises(ValueError, match="outside cell"):
            bilinear(unit_cell, [0.0, 0.0, 0.0, 0.0], (1.5, 0.5))

    def test_wrong_corner_count(self, unit_cell):
        """Test that exactly four corner values are required."""
        with pytest.raises(ValueError, match="4 corner values"):
            bilinear(unit_cell, [0.0, 0.0, 0.0], (0.5, 0.5))


class TestQuadratic:
    """Tests for the second-derivative-corrected interpolant."""

    def test_exact_for_quadratics(self):
        """Test that x^2 + y^2 is reproduced inside a cell."""
        cell = LeafCell(index=0, level=0, x0=0.5, y0=-0.25, width=0.5)
        fn = lambda x, y: x * x + y * y  # noqa: E731
        corners = [(0.5, -0.25), (0.5, 0.25), (1.0, -0.25), (1.0, 0.25)]
        values = [fn(x, y) for x, y in corners]
        p = (0.6, 0.1)
        result = quadratic(cell, values, [2.0] * 4, [2.0] * 4, p)
        assert result == pytest.approx(fn(*p), abs=1e-14)

    def test_zero_curvature_is_bilinear(self, unit_cell):
        """Test that zero second derivatives give the bilinear value."""
        values = [0.3, -0.2, 1.1, 0.7]
        p = (0.25, 0.8)
        assert quadratic(unit_cell, values, [0.0] * 4, [0.0] * 4, p) == pytest.approx(
            bilinear(unit_cell, values, p)
        )


class TestSample:
    """Tests for batched sampling on quadtree grids."""

    def test_linear_field_exact(self, circle_grid, rng):
        """Test that linear fields are reproduced at arbitrary points."""
        fn = lambda p: 0.5 * p[:, 0] - 2.0 * p[:, 1] + 1.0  # noqa: E731
        field = ScalarField(circle_grid, circle_grid.evaluate(fn))
        points = rng.uniform(-1.0, 1.0, (500, 2))
        np.testing.assert_allclose(sample(field, points), fn(points), atol=1e-12)

    def test_nodes_reproduced(self, circle_grid, circle):
        """Test that sampling at independent nodes returns nodal values."""
        values = circle_grid.evaluate(circle)
        field = ScalarField(circle_grid, values)
        free = np.flatnonzero(~circle_grid.hanging_mask)
        np.testing.assert_allclose(
            sample(field, circle_grid.node_coords[free]), values[free], atol=1e-14
        )

    def test_vector_field(self, circle_grid, uniform_flow, rng):
        """Test that vector fields are sampled componentwise."""
        field = VectorField(circle_grid, circle_grid.evaluate(uniform_flow))
        out = sample(field, rng.uniform(-1.0, 1.0, (20, 2)))
        assert out.shape == (20, 2)
        np.testing.assert_allclose(out, np.tile([1.0, 0.5], (20, 1)))

    def test_quadratic_mode(self, grid_config, rng):
        """Test quadratic sampling of x^2 with exact second derivatives."""
        grid = QuadtreeGrid.uniform(grid_config)
        fn = lambda p: p[:, 0] ** 2  # noqa: E731
        field = ScalarField(grid, grid.evaluate(fn))
        phixx = ScalarField(grid, np.full(grid.n_nodes, 2.0))
        phiyy = ScalarField(grid, np.zeros(grid.n_nodes))
        points = rng.uniform(-0.3, 0.3, (100, 2))
        result = sample(field, points, mode="quadratic", phixx=phixx, phiyy=phiyy)
        np.testing.assert_allclose(result, fn(points), atol=1e-12)

    def test_quadratic_requires_derivatives(self, circle_grid, circle):
        """Test that quadratic mode needs both derivative fields."""
        field = ScalarField(circle_grid, circle_grid.evaluate(circle))
        with pytest.raises(ValueError, match="requires phixx"):
            sample(field, np.zeros((1, 2)), mode="quadratic")

    def test_unknown_mode(self, circle_grid, circle):
        """Test that unknown modes are rejected."""
        field = ScalarField(circle_grid, circle_grid.evaluate(circle))
        with pytest.raises(ValueError, match="mode must be"):
            sample(field, np.zeros((1, 2)), mode="cubic")

    def test_empty_query(self, circle_grid, circle):
        """Test that an empty query returns an empty array."""
        field = ScalarField(circle_grid, circle_grid.evaluate(circle))
        assert sample(field, np.zeros((0, 2))).shape == (0,)

    def test_outside_point(self, circle_grid, circle):
        """Test that outside points raise unless clamped."""
        field = ScalarField(circle_grid, circle_grid.evaluate(circle))
        with pytest.raises(OutOfDomainError):
            sample(field, np.asarray([[2.0, 0.0]]))
        clamped = sample(field, np.asarray([[2.0, 0.0]]), clamp=True)
        assert clamped[0] == pytest.approx(sample(field, np.asarray([[1.0, 0.0]]))[0])


def _wave(p):
    return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


class TestQuadraticConvergence:
    """Tests for the accuracy order of quadratic sampling near the interface."""

    def test_third_order_in_the_band(self, circle, rng):
        """Test that halving h cuts the band error by at least 2^2.5."""
        theta = rng.uniform(0.0, 2.0 * np.pi, 1000)
        radius = 0.4 + rng.uniform(-0.01, 0.01, 1000)
        points = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])

        errors = []
        for l_max in (5, 6, 7):
            grid = build_grid(GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), l_max), circle)
            second = ScalarField(grid, -np.pi**2 * grid.evaluate(_wave))
            field = ScalarField(grid, grid.evaluate(_wave))
            result = sample(field, points, mode="quadratic", phixx=second, phiyy=second)
            errors.append(np.mean(np.abs(result - _wave(points))))

        orders = np.log2(np.asarray(errors[:-1]) / np.asarray(errors[1:]))
        assert np.all(orders >= 2.5), orders

    def test_bilinear_is_second_order(self, circle, rng):
        """Test that plain bilinear sampling stays near order two on the same points."""
        theta = rng.uniform(0.0, 2.0 * np.pi, 1000)
        points = 0.4 * np.column_stack([np.cos(theta), np.sin(theta)])

        errors = []
        for l_max in (5, 6):
            grid = build_grid(GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), l_max), circle)
            field = ScalarField(grid, grid.evaluate(_wave))
            errors.append(np.mean(np.abs(sample(field, points) - _wave(points))))

        assert 1.5 < np.log2(errors[0] / errors[1]) < 2.5
