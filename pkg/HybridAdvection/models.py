"""
Data models for the hybrid advection system.

This module defines the dataclasses shared by the grid, the solvers, the
data pipeline and the benchmarks, replacing loose arrays and tuples with
typed objects that validate themselves on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

from HybridAdvection.constants import (
    COL,
    DEFAULT_LIP,
    FEATURE_GROUPS,
    MAX_LATTICE_EXTENT,
    MAX_LEVEL,
    PACKET_SIZE,
)

if TYPE_CHECKING:
    from HybridAdvection.quadtree import QuadtreeGrid


@dataclass(frozen=True)
class GridConfig:
    """
    Geometry and refinement settings of a quadtree grid.

    Attributes:
        domain_min (Tuple[float, float]): Lower-left corner of the domain
        domain_max (Tuple[float, float]): Upper-right corner of the domain
        macromesh (Tuple[int, int]): Number of level-0 cells per axis
        l_max (int): Maximum refinement level
        lip (float): Lipschitz constant used by the refinement criterion
        band_halfwidth (float): Uniform band half-width in finest cell diagonals
    """

    domain_min: Tuple[float, float]
    domain_max: Tuple[float, float]
    macromesh: Tuple[int, int]
    l_max: int
    lip: float = DEFAULT_LIP
    band_halfwidth: float = 0.0

    def __post_init__(self):
        if self.l_max < 1:
            raise ValueError(f"l_max must be at least 1, got {self.l_max}")
        if self.l_max > MAX_LEVEL:
            raise ValueError(
                f"l_max={self.l_max} exceeds {MAX_LEVEL}; vertex coordinates "
                "would lose dyadic exactness"
            )
        if self.lip <= 0:
            raise ValueError(f"lip must be positive, got {self.lip}")
        if self.band_halfwidth < 0:
            raise ValueError(
                f"band_halfwidth must be non-negative, got {self.band_halfwidth}"
            )
        nx, ny = self.macromesh
        if nx < 1 or ny < 1:
            raise ValueError(f"macromesh must be positive, got {self.macromesh}")
        width_x = (self.domain_max[0] - self.domain_min[0]) / nx
        width_y = (self.domain_max[1] - self.domain_min[1]) / ny
        if width_x <= 0 or width_y <= 0:
            raise ValueError("domain_max must exceed domain_min componentwise")
        if not math.isclose(width_x, width_y, rel_tol=1e-12):
            raise ValueError(
                f"macrocells must be square, got {width_x} by {width_y}"
            )
        if max(nx, ny) * 2**self.l_max > MAX_LATTICE_EXTENT:
            raise ValueError("lattice too large for exact integer vertex keys")

    @property
    def macro_width(self) -> float:
        return (self.domain_max[0] - self.domain_min[0]) / self.macromesh[0]

    @property
    def h_min(self) -> float:
        return self.macro_width * 2.0**-self.l_max

    @property
    def lattice_shape(self) -> Tuple[int, int]:
        """Number of finest cells per axis."""
        scale = 2**self.l_max
        return self.macromesh[0] * scale, self.macromesh[1] * scale

    @property
    def area(self) -> float:
        return (self.domain_max[0] - self.domain_min[0]) * (
            self.domain_max[1] - self.domain_min[1]
        )


@dataclass(frozen=True)
class LeafCell:
    """A leaf of the quadtree: index, level, lower-left corner and width."""

    index: int
    level: int
    x0: float
    y0: float
    width: float

    def contains(self, p: Tuple[float, float], tol: float = 1e-12) -> bool:
        slack = tol * self.width
        return (
            self.x0 - slack <= p[0] <= self.x0 + self.width + slack
            and self.y0 - slack <= p[1] <= self.y0 + self.width + slack
        )


@dataclass(frozen=True)
class NodeStencil:
    """
    The 3x3 h-uniform neighborhood of a node.

    Attributes:
        center (int): Node index
        neighbors (Tuple[int, ...]): Eight neighbor indices in STENCIL_OFFSETS
            order, -1 where the vertex does not exist
        complete (bool): True when all eight neighbors exist
        missing (Tuple[Tuple[int, int], ...]): Offsets of missing neighbors
    """

    center: int
    neighbors: Tuple[int, ...]
    complete: bool
    missing: Tuple[Tuple[int, int], ...] = ()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    One real value per grid node.

    Attributes:
        grid (QuadtreeGrid): Grid the values live on
        values (np.ndarray): Nodal values, shape (n_nodes,)
        flags (Optional[np.ndarray]): Boolean mask of nodes holding fill values
    """

    grid: "QuadtreeGrid"
    values: np.ndarray
    flags: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} nodal values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("scalar field contains non-finite values")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two real values per grid node, shape (n_nodes, 2)."""

    grid: "QuadtreeGrid"
    values: np.ndarray
    flags: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_nodes, 2):
            raise ValueError(
                f"expected ({self.grid.n_nodes}, 2) nodal vectors, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("vector field contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class SimulationState:
    """
    Grid, level-set and velocity at one instant.

    Attributes:
        grid (QuadtreeGrid): Current grid
        phi (ScalarField): Nodal level-set values
        vel (VectorField): Nodal velocities
        time (float): Simulation time
        iter (int): Number of completed steps
    """

    grid: "QuadtreeGrid"
    phi: ScalarField
    vel: VectorField
    time: float = 0.0
    iter: int = 0

    def __post_init__(self):
        if self.phi.grid is not self.grid or self.vel.grid is not self.grid:
            raise ValueError("state fields must live on the state grid")


@dataclass(frozen=True)
class DataPacket:
    """
    The local record extracted for one interface-adjacent vertex.

    Corner data follow slot order 00, 01, 10, 11 of the cell owning the
    departure point; xd_rel is the departure point relative to that cell's
    lower-left corner, in units of h.
    """

    phi_a: float
    u_hat_a: Tuple[float, float]
    d: float
    xd_rel: Tuple[float, float]
    phi_corners: Tuple[float, float, float, float]
    u_corners: Tuple[Tuple[float, float], ...]
    phixx_d: float
    phiyy_d: float
    kappa_a: float
    phi_d: float

    def to_array(self) -> np.ndarray:
        """
        Convert to the flat packet layout used by batch operations.

        Returns:
            np.ndarray: Vector of PACKET_SIZE values in PACKET_COLUMNS order
        """
        row = [
            self.phi_a,
            *self.u_hat_a,
            self.d,
            *self.xd_rel,
            *self.phi_corners,
            *(c for corner in self.u_corners for c in corner),
            self.phixx_d,
            self.phiyy_d,
            self.kappa_a,
            self.phi_d,
        ]
        return np.asarray(row, dtype=np.float64)

    @classmethod
    def from_array(cls, row: np.ndarray) -> "DataPacket":
        """
        Create a DataPacket from a flat packet vector.

        Args:
            row (np.ndarray): Vector of PACKET_SIZE values

        Returns:
            DataPacket: New packet

        Raises:
            ValueError: If the vector has the wrong length or non-finite entries
        """
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (PACKET_SIZE,):
            raise ValueError(f"packet must have {PACKET_SIZE} values, got {row.shape}")
        if not np.all(np.isfinite(row)):
            raise ValueError("packet contains non-finite values")
        u = row[COL["u_00_x"] : COL["u_11_y"] + 1].reshape(4, 2)
        return cls(
            phi_a=float(row[COL["phi_a"]]),
            u_hat_a=(float(row[COL["u_hat_a_x"]]), float(row[COL["u_hat_a_y"]])),
            d=float(row[COL["d"]]),
            xd_rel=(float(row[COL["xd_rel_x"]]), float(row[COL["xd_rel_y"]])),
            phi_corners=tuple(float(v) for v in row[COL["phi_00"] : COL["phi_11"] + 1]),
            u_corners=tuple((float(a), float(b)) for a, b in u),
            phixx_d=float(row[COL["phixx_d"]]),
            phiyy_d=float(row[COL["phiyy_d"]]),
            kappa_a=float(row[COL["kappa_a"]]),
            phi_d=float(row[COL["phi_d"]]),
        )


@dataclass(frozen=True)
class LearningTuple:
    """A data packet paired with its h-normalized fine-grid target."""

    packet: DataPacket
    target: float

    def __post_init__(self):
        if not math.isfinite(self.target):
            raise ValueError(f"target must be finite, got {self.target}")

    def to_array(self) -> np.ndarray:
        return np.append(self.packet.to_array(), self.target)

    @classmethod
    def from_array(cls, row: np.ndarray) -> "LearningTuple":
        row = np.asarray(row, dtype=np.float64)
        return cls(DataPacket.from_array(row[:-1]), float(row[-1]))


@dataclass(frozen=True)
class TrainingStats:
    """
    Per-group standardization statistics.

    Attributes:
        means (Dict[str, float]): Mean of each feature group
        sigmas (Dict[str, float]): Standard deviation of each feature group
        n_components (int): Number of PCA components fed to the network
    """

    means: Dict[str, float]
    sigmas: Dict[str, float]
    n_components: int

    def __post_init__(self):
        missing = set(FEATURE_GROUPS) - set(self.means) | set(FEATURE_GROUPS) - set(
            self.sigmas
        )
        if missing:
            raise ValueError(f"missing statistics for groups {sorted(missing)}")
        for group, sigma in self.sigmas.items():
            if not sigma > 0:
                raise ValueError(f"sigma of group '{group}' must be positive")
        if not 1 <= self.n_components <= PACKET_SIZE:
            raise ValueError(
                f"n_components must be in [1, {PACKET_SIZE}], got {self.n_components}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "means": {g: self.means[g] for g in FEATURE_GROUPS},
            "sigmas": {g: self.sigmas[g] for g in FEATURE_GROUPS},
            "n_components": self.n_components,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "TrainingStats":
        return cls(
            means={g: float(v) for g, v in doc["means"].items()},
            sigmas={g: float(v) for g, v in doc["sigmas"].items()},
            n_components=int(doc["n_components"]),
        )


@dataclass(frozen=True, eq=False)
class PcaModel:
    """
    Principal axes of the standardized packets.

    Attributes:
        mean (np.ndarray): Mean of the standardized training vectors
        components (np.ndarray): Orthonormal rows, shape (n_components, PACKET_SIZE)
        eigenvalues (np.ndarray): Variances along each row, sorted descending
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        # C order fixes the reduction order of project, so reloaded models match bit for bit
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        components = np.ascontiguousarray(self.components, dtype=np.float64)
        eigenvalues = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        if mean.shape != (PACKET_SIZE,):
            raise ValueError(f"PCA mean must have {PACKET_SIZE} entries")
        if components.ndim != 2 or components.shape[1] != PACKET_SIZE:
            raise ValueError(f"PCA components must have {PACKET_SIZE} columns")
        if eigenvalues.shape != (components.shape[0],):
            raise ValueError("one eigenvalue per PCA component is required")
        if np.any(eigenvalues <= 0):
            raise ValueError("PCA eigenvalues must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "PcaModel":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            components=np.asarray(doc["components"], dtype=np.float64),
            eigenvalues=np.asarray(doc["eigenvalues"], dtype=np.float64),
        )


@dataclass(frozen=True)
class EvalReport:
    """Error statistics of predictions against targets, in units of h."""

    mae: float
    linf: float
    rmse: float

    def __post_init__(self):
        if self.mae < 0 or self.rmse < 0:
            raise ValueError("error statistics must be non-negative")
        if self.mae > self.linf * (1 + 1e-12):
            raise ValueError(f"mae {self.mae} exceeds linf {self.linf}")


@dataclass
class BenchReport:
    """
    One measurement of a benchmark run.

    Attributes:
        mae (float): Mean absolute error over band nodes
        linf (float): Maximum absolute error over band nodes
        area (float): Area of the negative region
        area_loss_pct (float): Relative area change against the reference, percent
        wall_time_s (float): Wall-clock seconds spent advancing to this report
        label (str): Human label, e.g. "revolution 1"
        time (float): Simulation time of the measurement
        vanished (bool): True when the interface no longer exists
    """

    mae: float
    linf: float
    area: float
    area_loss_pct: float
    wall_time_s: float = 0.0
    label: str = ""
    time: float = 0.0
    vanished: bool = False

    def to_row(self) -> Dict[str, Any]:
        """Deterministic columns only; wall time is written separately."""
        return {
            "label": self.label,
            "time": self.time,
            "mae": self.mae,
            "linf": self.linf,
            "area": self.area,
            "area_loss_pct": self.area_loss_pct,
            "vanished": self.vanished,
        }


@dataclass
class StepDiagnostics:
    """Per-step counters of a simulation run."""

    iteration: int
    time: float
    packets: int = 0
    reversions: int = 0
    ml_applied: bool = False
    area: float = float("nan")
    band_mae: float = float("nan")


@dataclass
class ConfigurationRecord:
    """
    One (velocity field, radius, center) configuration of a generation run.

    Attributes:
        index (int): Position of the configuration in the run
        field_index (int): Index of the velocity field
        field_seed (int): Seed the velocity field was drawn from
        radius (float): Initial circle radius
        center (Tuple[float, float]): Initial circle center
        n_tuples (int): Learning tuples produced
        run_id (Optional[int]): Manifest run ID (None before insertion)
    """

    index: int
    field_index: int
    field_seed: int
    radius: float
    center: Tuple[float, float]
    n_tuples: int = 0
    run_id: Optional[int] = None

    def to_tuple(self) -> tuple:
        return (
            self.run_id,
            self.index,
            self.field_index,
            self.field_seed,
            self.radius,
            self.center[0],
            self.center[1],
            self.n_tuples,
        )

    @classmethod
    def from_db_row(cls, row: tuple) -> "ConfigurationRecord":
        """
        Create a record from a database row.

        Args:
            row (tuple): (run_id, idx, field_index, field_seed, radius,
                          center_x, center_y, n_tuples)

        Returns:
            ConfigurationRecord: New record
        """
        run_id, index, field_index, field_seed, radius, cx, cy, n_tuples = row
        return cls(
            index=int(index),
            field_index=int(field_index),
            field_seed=int(field_seed),
            radius=float(radius),
            center=(float(cx), float(cy)),
            n_tuples=int(n_tuples),
            run_id=int(run_id),
        )


@dataclass
class DatasetSplits:
    """Train, test and validation arrays of learning tuples."""

    train: np.ndarray
    test: np.ndarray
    validation: np.ndarray
    discarded: int = 0
    merged_bins: List[int] = field(default_factory=list)
