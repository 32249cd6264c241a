"""Pytest configuration and fixtures for the test suite."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from HybridAdvection.metrics import circle_sdf  # noqa: E402
from HybridAdvection.models import GridConfig  # noqa: E402
from HybridAdvection.quadtree import build_grid  # noqa: E402


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Drop cached settings and any HA_* variables leaking from the shell."""
    from config.settings import reset_config

    for key in list(os.environ):
        if key.startswith("HA_"):
            monkeypatch.delenv(key)
    reset_config()
    yield
    reset_config()


@pytest.fixture
def sample_env_vars(monkeypatch):
    """Fixture to set up test environment variables."""
    monkeypatch.setenv("HA_L_C_MAX", "5")
    monkeypatch.setenv("HA_L_F_MAX", "7")
    monkeypatch.setenv("HA_N_FIELDS", "2")
    monkeypatch.setenv("HA_SEED", "3")
    monkeypatch.setenv("HA_HIDDEN_UNITS", "32")


@pytest.fixture
def grid_config():
    """[-1, 1]^2 with a 2x2 macromesh at l_max = 5 (h = 1/32)."""
    return GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), 5)


@pytest.fixture
def circle():
    """Signed distance to the circle of radius 0.4 centered at the origin."""
    return circle_sdf((0.0, 0.0), 0.4)


@pytest.fixture
def circle_grid(grid_config, circle):
    """Adaptive grid refined around the circle."""
    return build_grid(grid_config, circle)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def zero_velocity():
    def velocity(points):
        return np.zeros((len(points), 2))

    return velocity


@pytest.fixture
def uniform_flow():
    """Constant velocity (1, 0.5)."""

    def velocity(points):
        out = np.empty((len(points), 2))
        out[:, 0] = 1.0
        out[:, 1] = 0.5
        return out

    return velocity
