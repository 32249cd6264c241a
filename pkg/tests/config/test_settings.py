"""Unit tests for configuration settings."""

import pytest

from config.settings import (
    BenchConfig,
    GenerationConfig,
    RunSettings,
    TrainConfig,
    get_config,
    reset_config,
)


class TestGenerationConfig:
    """Tests for GenerationConfig class."""

    def test_load_from_env_success(self, sample_env_vars):
        """Test successful loading of generation settings from the environment."""
        config = GenerationConfig.load_from_env()

        assert config.l_c_max == 5
        assert config.l_f_max == 7
        assert config.n_fields == 2
        assert config.seed == 3
        assert config.n_radii is None

    def test_defaults(self):
        """Test the default mesh sizes and band."""
        config = GenerationConfig()
        assert config.h_c == 2.0**-6
        assert config.h_f == 2.0**-8
        assert config.r_min == pytest.approx(5.0 / 64)
        assert config.coarse_grid().band_halfwidth == 2.0

    def test_file_values_overridden_by_environment(self, tmp_path, monkeypatch):
        """Test that environment variables take precedence over the config file."""
        path = tmp_path / "run.env"
        path.write_text("HA_T_END=0.25\nHA_NU=4\n")
        monkeypatch.setenv("HA_NU", "7")

        config = GenerationConfig.load_from_env(str(path))

        assert config.t_end == 0.25
        assert config.nu == 7

    def test_missing_file(self, tmp_path):
        """Test that a missing config file raises ValueError."""
        with pytest.raises(ValueError, match="not found"):
            GenerationConfig.load_from_env(str(tmp_path / "missing.env"))

    def test_invalid_integer(self, monkeypatch):
        """Test that a non-integer level raises ValueError."""
        monkeypatch.setenv("HA_L_C_MAX", "six")

        with pytest.raises(ValueError, match="HA_L_C_MAX must be a valid integer"):
            GenerationConfig.load_from_env()

    def test_non_finite_float(self, monkeypatch):
        """Test that infinite values are rejected."""
        monkeypatch.setenv("HA_T_END", "inf")

        with pytest.raises(ValueError, match="must be finite"):
            GenerationConfig.load_from_env()

    def test_workers_positive(self, monkeypatch):
        """Test that a zero worker count is rejected."""
        monkeypatch.setenv("HA_WORKERS", "0")

        with pytest.raises(ValueError, match="workers must be positive"):
            GenerationConfig.load_from_env()

    def test_levels_ordered(self):
        """Test that the coarse level must be below the fine level."""
        with pytest.raises(ValueError, match="must be smaller than"):
            GenerationConfig(l_c_max=8, l_f_max=8)

    def test_radius_range(self):
        """Test that r_max must exceed the smallest radius."""
        with pytest.raises(ValueError, match="r_min"):
            GenerationConfig(r_max=0.05)

    def test_config_is_frozen(self):
        """Test that GenerationConfig is immutable (frozen dataclass)."""
        config = GenerationConfig()

        with pytest.raises(Exception):  # FrozenInstanceError in Python 3.10+
            config.seed = 1


class TestTrainConfig:
    """Tests for TrainConfig class."""

    def test_defaults(self):
        """Test the default network and optimizer settings."""
        config = TrainConfig()
        assert config.hidden_units == 130
        assert config.n_components == 17
        assert config.folds == 10

    def test_load_fractions(self, monkeypatch):
        """Test that split fractions are read as a comma-separated list."""
        monkeypatch.setenv("HA_FRACTIONS", "0.8,0.1,0.0")
        monkeypatch.setenv("HA_HIDDEN_UNITS", "32")

        config = TrainConfig.load_from_env()

        assert config.fractions == (0.8, 0.1, 0.0)
        assert config.hidden_units == 32

    def test_bad_fraction_list(self, monkeypatch):
        """Test that malformed fraction lists raise ValueError."""
        monkeypatch.setenv("HA_FRACTIONS", "0.7;0.1;0.1")

        with pytest.raises(ValueError, match="comma-separated"):
            TrainConfig.load_from_env()

    def test_lr_floor_above_initial(self):
        """Test that the learning-rate floor cannot exceed the initial rate."""
        with pytest.raises(ValueError, match="lr_floor"):
            TrainConfig(lr_init=1e-4, lr_floor=1e-3)

    def test_component_range(self):
        """Test that the component count is bounded by the packet size."""
        with pytest.raises(ValueError, match="n_components"):
            TrainConfig(n_components=23)


class TestBenchConfig:
    """Tests for BenchConfig class."""

    def test_load_from_env(self, monkeypatch):
        """Test benchmark settings from the environment."""
        monkeypatch.setenv("HA_REVOLUTIONS", "3")
        monkeypatch.setenv("HA_BAND", "0")

        config = BenchConfig.load_from_env()

        assert config.revolutions == 3
        assert config.band == 0.0
        assert config.nu == 10

    def test_invalid_values(self):
        """Test that non-positive settings are rejected."""
        with pytest.raises(ValueError, match="revolutions"):
            BenchConfig(revolutions=0)
        with pytest.raises(ValueError, match="cfl"):
            BenchConfig(cfl=0.0)


class TestGetConfig:
    """Tests for get_config function."""

    def test_get_config_singleton(self):
        """Test that get_config returns the same instance."""
        config1 = get_config()
        config2 = get_config()

        assert config1 is config2

    def test_reset_config_reloads(self, monkeypatch):
        """Test that reset_config picks up changed settings."""
        first = get_config()
        monkeypatch.setenv("HA_OUTPUT_DIR", "elsewhere")
        assert get_config() is first

        reset_config()

        assert get_config().output_dir == "elsewhere"

    def test_log_level_normalized(self, monkeypatch):
        """Test that log levels are upper-cased and validated."""
        monkeypatch.setenv("HA_LOG_LEVEL", "debug")
        assert RunSettings.load_from_env().log_level == "DEBUG"

        monkeypatch.setenv("HA_LOG_LEVEL", "verbose")
        with pytest.raises(ValueError, match="logging level"):
            RunSettings.load_from_env()
