"""
Centralized configuration management for the hybrid advection tools.

Settings come from a dotenv-style key=value file (keys prefixed HA_) with
process environment variables of the same name taking precedence, so a
single source of truth feeds data generation, training and benchmarks.
"""

import math
import os
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from dotenv import dotenv_values

from HybridAdvection.constants import (
    DEFAULT_HIDDEN_UNITS,
    DEFAULT_N_COMPONENTS,
    DEFAULT_NU,
    PACKET_SIZE,
    SPLIT_FOLDS,
    VORTEX_T_MID,
)
from HybridAdvection.models import GridConfig

PREFIX = "HA_"


def _read_values(path: Optional[str]) -> Dict[str, str]:
    """Merge file values with HA_* environment variables (environment wins)."""
    values: Dict[str, str] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ValueError(f"config file {path} not found")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    values.update({k: v for k, v in os.environ.items() if k.startswith(PREFIX)})
    return values


def _get_int(values: Dict[str, str], key: str, default: int) -> int:
    raw = values.get(PREFIX + key)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{PREFIX}{key} must be a valid integer, got {raw}")


def _get_float(values: Dict[str, str], key: str, default: float) -> float:
    raw = values.get(PREFIX + key)
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{PREFIX}{key} must be a valid number, got {raw}")
    if not math.isfinite(value):
        raise ValueError(f"{PREFIX}{key} must be finite, got {raw}")
    return value


def _get_floats(
    values: Dict[str, str], key: str, default: Tuple[float, ...]
) -> Tuple[float, ...]:
    raw = values.get(PREFIX + key)
    if raw is None or raw == "":
        return default
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ValueError(f"{PREFIX}{key} must be a comma-separated list of numbers, got {raw}")


def _get_str(values: Dict[str, str], key: str, default: str) -> str:
    raw = values.get(PREFIX + key)
    return default if raw is None or raw == "" else raw


@dataclass(frozen=True)
class GenerationConfig:
    """
    Settings of a training-data generation run.

    Attributes:
        l_c_max (int): Finest level of the coarse grids
        l_f_max (int): Finest level of the fine grids
        t_end (float): Simulated time per configuration
        nu (int): Reinitialization iterations per coarse step
        n_fields (int): Number of random velocity fields
        n_centers (int): Number of random circle centers per radius
        b_c (float): Coarse uniform band half-width, in cell diagonals
        r_freq (int): Coarse grid is reset from the fine grid every r_freq steps
        cfl (float): Courant number
        r_max (float): Largest initial radius
        seed (int): Base seed of the run
        n_radii (Optional[int]): Number of radii; None uses the full count
        workers (int): Worker processes for configuration-parallel runs
    """

    l_c_max: int = 6
    l_f_max: int = 8
    t_end: float = 0.5
    nu: int = DEFAULT_NU
    n_fields: int = 7
    n_centers: int = 4
    b_c: float = 2.0
    r_freq: int = 3
    cfl: float = 1.0
    r_max: float = 0.25
    seed: int = 0
    n_radii: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.l_c_max < 1:
            raise ValueError(f"l_c_max must be at least 1, got {self.l_c_max}")
        if self.l_c_max >= self.l_f_max:
            raise ValueError(
                f"l_c_max ({self.l_c_max}) must be smaller than l_f_max ({self.l_f_max})"
            )
        for name in ("n_fields", "n_centers", "r_freq", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("t_end", "b_c", "cfl", "r_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if self.n_radii is not None and self.n_radii < 1:
            raise ValueError(f"n_radii must be positive, got {self.n_radii}")
        if self.r_min >= self.r_max:
            raise ValueError(f"r_min ({self.r_min}) must be below r_max ({self.r_max})")

    domain_min = (-1.0, -1.0)
    domain_max = (1.0, 1.0)
    macromesh = (2, 2)

    @property
    def h_c(self) -> float:
        return 2.0**-self.l_c_max

    @property
    def h_f(self) -> float:
        return 2.0**-self.l_f_max

    @property
    def r_min(self) -> float:
        return 5.0 * self.h_c

    @property
    def b_f(self) -> float:
        """Fine band half-width covering the coarse band, in fine cell diagonals."""
        return 1.75 * self.b_c * 2.0 ** (self.l_f_max - self.l_c_max - 1)

    @property
    def radii(self) -> np.ndarray:
        count = self.n_radii
        if count is None:
            count = math.ceil(3.0 * (self.r_max - self.r_min) / self.h_c) + 1
        if count == 1:
            return np.asarray([self.r_min])
        return np.linspace(self.r_min, self.r_max, count)

    def coarse_grid(self) -> GridConfig:
        return GridConfig(
            self.domain_min, self.domain_max, self.macromesh, self.l_c_max, band_halfwidth=self.b_c
        )

    def fine_grid(self) -> GridConfig:
        return GridConfig(
            self.domain_min, self.domain_max, self.macromesh, self.l_f_max, band_halfwidth=self.b_f
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "l_c_max": self.l_c_max,
            "l_f_max": self.l_f_max,
            "t_end": self.t_end,
            "nu": self.nu,
            "n_fields": self.n_fields,
            "n_centers": self.n_centers,
            "b_c": self.b_c,
            "r_freq": self.r_freq,
            "cfl": self.cfl,
            "r_max": self.r_max,
            "seed": self.seed,
            "n_radii": self.n_radii,
        }

    @classmethod
    def load_from_env(cls, path: Optional[str] = None) -> "GenerationConfig":
        """
        Load generation settings from a config file and the environment.

        Raises:
            ValueError: If a value is malformed or the settings are inconsistent
        """
        values = _read_values(path)
        n_radii = _get_int(values, "N_RADII", 0)
        return cls(
            l_c_max=_get_int(values, "L_C_MAX", 6),
            l_f_max=_get_int(values, "L_F_MAX", 8),
            t_end=_get_float(values, "T_END", 0.5),
            nu=_get_int(values, "NU", DEFAULT_NU),
            n_fields=_get_int(values, "N_FIELDS", 7),
            n_centers=_get_int(values, "N_CENTERS", 4),
            b_c=_get_float(values, "B_C", 2.0),
            r_freq=_get_int(values, "R_FREQ", 3),
            cfl=_get_float(values, "CFL", 1.0),
            r_max=_get_float(values, "R_MAX", 0.25),
            seed=_get_int(values, "SEED", 0),
            n_radii=n_radii or None,
            workers=_get_int(values, "WORKERS", 1),
        )


@dataclass(frozen=True)
class TrainConfig:
    """
    Network and optimizer settings.

    Attributes:
        batch_size (int): Samples per mini-batch
        lr_init (float): Initial learning rate
        lr_floor (float): Smallest learning rate reached by halving
        lr_halving_patience (int): Stale epochs before the learning rate halves
        early_stop_patience (int): Stale epochs before training stops
        max_epochs (int): Epoch limit
        l2_factor (float): Weight of the L2 penalty on hidden weights
        seed (int): Seed of initialization and shuffling
        hidden_units (int): Width of the hidden layers
        n_components (int): Principal components fed to the network
        bins (int): Target bins of the stratified split
        fractions (Tuple[float, float, float]): Train, test and validation shares
        discard (float): Share of samples left out of every split
    """

    batch_size: int = 64
    lr_init: float = 1.5e-4
    lr_floor: float = 1.5e-5
    lr_halving_patience: int = 15
    early_stop_patience: int = 50
    max_epochs: int = 1000
    l2_factor: float = 1e-6
    seed: int = 0
    hidden_units: int = DEFAULT_HIDDEN_UNITS
    n_components: int = DEFAULT_N_COMPONENTS
    bins: int = 100
    fractions: Tuple[float, float, float] = (0.7, 0.1, 0.1)
    discard: float = 0.1

    def __post_init__(self):
        for name in (
            "batch_size",
            "lr_init",
            "lr_floor",
            "lr_halving_patience",
            "early_stop_patience",
            "max_epochs",
            "hidden_units",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.l2_factor < 0:
            raise ValueError(f"l2_factor must be non-negative, got {self.l2_factor}")
        if self.lr_floor > self.lr_init:
            raise ValueError(
                f"lr_floor ({self.lr_floor}) must not exceed lr_init ({self.lr_init})"
            )
        if not 1 <= self.n_components <= PACKET_SIZE:
            raise ValueError(
                f"n_components must be in [1, {PACKET_SIZE}], got {self.n_components}"
            )
        if self.bins < 2:
            raise ValueError(f"bins must be at least 2, got {self.bins}")
        if len(self.fractions) != 3:
            raise ValueError(f"fractions must have 3 entries, got {self.fractions}")

    @property
    def folds(self) -> int:
        return SPLIT_FOLDS

    @classmethod
    def load_from_env(cls, path: Optional[str] = None) -> "TrainConfig":
        """
        Load training settings from a config file and the environment.

        Raises:
            ValueError: If a value is malformed
        """
        values = _read_values(path)
        fractions = _get_floats(values, "FRACTIONS", (0.7, 0.1, 0.1))
        return cls(
            batch_size=_get_int(values, "BATCH_SIZE", 64),
            lr_init=_get_float(values, "LR_INIT", 1.5e-4),
            lr_floor=_get_float(values, "LR_FLOOR", 1.5e-5),
            lr_halving_patience=_get_int(values, "LR_PATIENCE", 15),
            early_stop_patience=_get_int(values, "EARLY_STOP_PATIENCE", 50),
            max_epochs=_get_int(values, "MAX_EPOCHS", 1000),
            l2_factor=_get_float(values, "L2_FACTOR", 1e-6),
            seed=_get_int(values, "SEED", 0),
            hidden_units=_get_int(values, "HIDDEN_UNITS", DEFAULT_HIDDEN_UNITS),
            n_components=_get_int(values, "N_COMPONENTS", DEFAULT_N_COMPONENTS),
            bins=_get_int(values, "BINS", 100),
            fractions=tuple(fractions),
            discard=_get_float(values, "DISCARD", 0.1),
        )


@dataclass(frozen=True)
class BenchConfig:
    """
    Benchmark settings.

    Attributes:
        nu (int): Reinitialization iterations per step
        cfl (float): Courant number
        revolutions (int): Revolutions of the rotation test
        t_mid (float): Reversal time of the vortex test
        band (float): Uniform band half-width of the benchmark grids
    """

    nu: int = DEFAULT_NU
    cfl: float = 1.0
    revolutions: int = 1
    t_mid: float = VORTEX_T_MID
    band: float = 2.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if not self.cfl > 0:
            raise ValueError(f"cfl must be positive, got {self.cfl}")
        if self.revolutions < 1:
            raise ValueError(f"revolutions must be positive, got {self.revolutions}")
        if not self.t_mid > 0:
            raise ValueError(f"t_mid must be positive, got {self.t_mid}")
        if self.band < 0:
            raise ValueError(f"band must be non-negative, got {self.band}")

    @classmethod
    def load_from_env(cls, path: Optional[str] = None) -> "BenchConfig":
        values = _read_values(path)
        return cls(
            nu=_get_int(values, "NU", DEFAULT_NU),
            cfl=_get_float(values, "CFL", 1.0),
            revolutions=_get_int(values, "REVOLUTIONS", 1),
            t_mid=_get_float(values, "T_MID", VORTEX_T_MID),
            band=_get_float(values, "BAND", 2.0),
        )


@dataclass(frozen=True)
class RunSettings:
    """
    Process-wide settings.

    Attributes:
        output_dir (str): Default directory for run outputs
        log_level (str): Root logger level
        manifest_path (str): sqlite file recording generation runs
    """

    output_dir: str = "runs"
    log_level: str = "INFO"
    manifest_path: str = "manifest.db"

    @classmethod
    def load_from_env(cls, path: Optional[str] = None) -> "RunSettings":
        """
        Load process settings from a config file and the environment.

        Raises:
            ValueError: If a value is malformed
        """
        values = _read_values(path)
        log_level = _get_str(values, "LOG_LEVEL", "INFO").upper()
        if log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"{PREFIX}LOG_LEVEL must be a logging level name, got {log_level}")
        return cls(
            output_dir=_get_str(values, "OUTPUT_DIR", "runs"),
            log_level=log_level,
            manifest_path=_get_str(values, "MANIFEST", "manifest.db"),
        )


# Global settings instance, loaded once and reused throughout the application
config: Optional[RunSettings] = None


def get_config(path: Optional[str] = None) -> RunSettings:
    """
    Get the global run settings.

    Loads settings on first call and returns the cached instance thereafter.

    Raises:
        ValueError: If settings cannot be loaded
    """
    global config
    if config is None:
        config = RunSettings.load_from_env(path)
    return config


def reset_config() -> None:
    """Drop the cached settings (used by tests and by --config reloads)."""
    global config
    config = None
