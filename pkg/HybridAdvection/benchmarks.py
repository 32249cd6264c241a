"""
Rotation and vortex benchmarks for the numerical and hybrid pipelines.

Both tests advect a disk and compare the result to its analytic signed
distance. Runs of either method start from the same initial state, so the
difference between a numerical and a hybrid run isolates the neural
correction.
"""

import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import BenchConfig
from HybridAdvection.advect import VelocityFunction, initial_state, simulate_numerical
from HybridAdvection.constants import (
    ROTATION_CENTER,
    ROTATION_PERIOD,
    ROTATION_RADIUS,
    VORTEX_CENTER,
    VORTEX_RADIUS,
)
from HybridAdvection.contour import emit_contour, plot_contour
from HybridAdvection.hybrid import simulate_hybrid
from HybridAdvection.metrics import (
    SignedDistance,
    area_quadrature,
    circle_sdf,
    disk_area,
    measure,
)
from HybridAdvection.models import (
    BenchReport,
    GridConfig,
    SimulationState,
    StepDiagnostics,
    VectorField,
)
from HybridAdvection.neural import ModelBundle
from HybridAdvection.plots import AREA_COLUMNS, plot_area_evolution

logger = logging.getLogger(__name__)

NUMERICAL = "numerical"
HYBRID = "hybrid"
METHODS = (NUMERICAL, HYBRID)

DIAGNOSTIC_COLUMNS = [
    "iteration", "time", "packets", "reversions", "ml_applied", "area", "band_mae"
]

# Peak speed of both benchmark flows over their domains
PEAK_SPEED = 1.0

EXTENDED_T_MID = 1.0


def rotation_velocity(points: np.ndarray) -> np.ndarray:
    """Rigid rotation u = (-y, x) / sqrt(2)."""
    points = np.asarray(points, dtype=np.float64)
    return np.stack([-points[:, 1], points[:, 0]], axis=1) / math.sqrt(2.0)


def vortex_velocity(points: np.ndarray) -> np.ndarray:
    """Single vortex u = (-sin^2(pi x) sin(2 pi y), sin^2(pi y) sin(2 pi x))."""
    points = np.asarray(points, dtype=np.float64)
    x, y = points[:, 0], points[:, 1]
    return np.stack(
        [
            -np.sin(np.pi * x) ** 2 * np.sin(2.0 * np.pi * y),
            np.sin(np.pi * y) ** 2 * np.sin(2.0 * np.pi * x),
        ],
        axis=1,
    )


def reversed_vortex_velocity(points: np.ndarray) -> np.ndarray:
    return -vortex_velocity(points)


def rotation_grid(l_max: int, band: float = 0.0) -> GridConfig:
    return GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), l_max, band_halfwidth=band)


def vortex_grid(l_max: int, band: float = 0.0) -> GridConfig:
    return GridConfig((0.0, 0.0), (1.0, 1.0), (1, 1), l_max, band_halfwidth=band)


def rotated_circle_sdf(t: float) -> SignedDistance:
    """Exact level-set of the rotation test at time t."""
    angle = t / math.sqrt(2.0)
    cx, cy = ROTATION_CENTER
    center = (
        cx * math.cos(angle) - cy * math.sin(angle),
        cx * math.sin(angle) + cy * math.cos(angle),
    )
    return circle_sdf(center, ROTATION_RADIUS)


@dataclass
class BenchmarkRun:
    """
    Outcome of one benchmark run.

    Attributes:
        method (str): "numerical" or "hybrid"
        reports (List[BenchReport]): Measurements in run order
        final (SimulationState): Last state
        reference (SignedDistance): Exact level-set the final state is compared to
        snapshots (Dict[str, SimulationState]): Labeled intermediate states
        areas (pd.DataFrame): Normalized area per step
        diagnostics (pd.DataFrame): Per-step counters
    """

    method: str
    reports: List[BenchReport]
    final: SimulationState
    reference: SignedDistance
    snapshots: Dict[str, SimulationState] = field(default_factory=dict)
    areas: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=AREA_COLUMNS))
    diagnostics: pd.DataFrame = field(
        default_factory=lambda: pd.DataFrame(columns=DIAGNOSTIC_COLUMNS)
    )


class StepRecorder:
    """Observer collecting per-step area, plus step counters when keep_rows is set."""

    def __init__(self, method: str, reference_area: float, keep_rows: bool = False, exact=None):
        self.method = method
        self.reference_area = reference_area
        self.keep_rows = keep_rows
        self.exact = exact
        self.areas: List[Tuple[str, float, float]] = []
        self.rows: List[Dict] = []

    def record_initial(self, state: SimulationState) -> None:
        self.areas.append((self.method, state.time, area_quadrature(state) / self.reference_area))

    def __call__(self, state: SimulationState, diagnostics: StepDiagnostics) -> None:
        area = area_quadrature(state)
        self.areas.append((self.method, state.time, area / self.reference_area))
        if not self.keep_rows:
            return
        diagnostics.area = area
        if self.exact is not None:
            diagnostics.band_mae = measure(state, self.exact(state.time)).mae
        self.rows.append(dataclasses.asdict(diagnostics))

    def frames(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        return (
            pd.DataFrame(self.areas, columns=AREA_COLUMNS),
            pd.DataFrame(self.rows, columns=DIAGNOSTIC_COLUMNS),
        )


def _advance(
    method: str,
    bundle: Optional[ModelBundle],
    state: SimulationState,
    velocity_fn: VelocityFunction,
    t_end: float,
    config: BenchConfig,
    recorder: StepRecorder,
) -> SimulationState:
    if method == HYBRID:
        states = simulate_hybrid(
            bundle,
            state,
            velocity_fn,
            t_end,
            config.nu,
            config.cfl,
            observer=recorder,
            keep_states=False,
            max_velocity=PEAK_SPEED,
        )
    else:
        states = simulate_numerical(
            state,
            velocity_fn,
            t_end,
            config.nu,
            config.cfl,
            observer=recorder,
            keep_states=False,
            max_velocity=PEAK_SPEED,
        )
    return states[-1]


def _check_method(method: str, bundle: Optional[ModelBundle]) -> None:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method == HYBRID and bundle is None:
        raise ValueError("the hybrid method needs a trained model")


def run_rotation(
    method: str,
    l_max: int,
    config: Optional[BenchConfig] = None,
    bundle: Optional[ModelBundle] = None,
    diagnostics: bool = False,
) -> BenchmarkRun:
    """
    Rotate a disk of radius 0.15 about the origin for whole revolutions.

    Args:
        method: "numerical" or "hybrid"
        l_max: Finest grid level
        config: Step, reinitialization and revolution settings
        bundle: Trained model for the hybrid method
        diagnostics: Keep per-step counters with band errors against the rotated disk

    Returns:
        BenchmarkRun: One report per revolution
    """
    config = config or BenchConfig()
    _check_method(method, bundle)
    exact = circle_sdf(ROTATION_CENTER, ROTATION_RADIUS)
    reference_area = disk_area(ROTATION_RADIUS)
    state = initial_state(rotation_grid(l_max, config.band), exact, rotation_velocity)
    recorder = StepRecorder(method, reference_area, diagnostics, rotated_circle_sdf)
    recorder.record_initial(state)

    reports = []
    for revolution in range(1, config.revolutions + 1):
        started = time.perf_counter()
        state = _advance(
            method, bundle, state, rotation_velocity, revolution * ROTATION_PERIOD, config, recorder
        )
        elapsed = time.perf_counter() - started
        report = measure(state, exact, reference_area, label=f"revolution {revolution}")
        report.wall_time_s = elapsed
        logger.info(
            "%s rotation l_max=%d revolution %d: mae=%.4e linf=%.4e area loss=%.3f%% (%.1fs)",
            method,
            l_max,
            revolution,
            report.mae,
            report.linf,
            report.area_loss_pct,
            elapsed,
        )
        reports.append(report)

    areas, rows = recorder.frames()
    return BenchmarkRun(method, reports, state, exact, areas=areas, diagnostics=rows)


def run_vortex(
    method: str,
    l_max: int,
    config: Optional[BenchConfig] = None,
    bundle: Optional[ModelBundle] = None,
    extended: bool = False,
    diagnostics: bool = False,
) -> BenchmarkRun:
    """
    Stretch a disk in a single vortex, then reverse the flow back.

    The flow runs forward to t_mid and backward to 2 t_mid; the final state
    is compared to the initial disk. The intermediate state has no analytic
    reference and is kept as the "t_mid" snapshot.

    Args:
        method: "numerical" or "hybrid"
        l_max: Finest grid level
        config: Step, reinitialization and t_mid settings
        bundle: Trained model for the hybrid method
        extended: Use t_mid = 1 (final time 2) regardless of config.t_mid
        diagnostics: Keep per-step counters

    Returns:
        BenchmarkRun: A single report at 2 t_mid
    """
    config = config or BenchConfig()
    _check_method(method, bundle)
    t_mid = EXTENDED_T_MID if extended else config.t_mid
    exact = circle_sdf(VORTEX_CENTER, VORTEX_RADIUS)
    reference_area = disk_area(VORTEX_RADIUS)
    state = initial_state(vortex_grid(l_max, config.band), exact, vortex_velocity)
    recorder = StepRecorder(method, reference_area, diagnostics)
    recorder.record_initial(state)

    started = time.perf_counter()
    middle = _advance(method, bundle, state, vortex_velocity, t_mid, config, recorder)
    grid = middle.grid
    backward = SimulationState(
        grid,
        middle.phi,
        VectorField(grid, grid.evaluate(reversed_vortex_velocity)),
        middle.time,
        middle.iter,
    )
    final = _advance(
        method, bundle, backward, reversed_vortex_velocity, 2.0 * t_mid, config, recorder
    )
    elapsed = time.perf_counter() - started

    report = measure(final, exact, reference_area, label=f"t={2.0 * t_mid:g}")
    report.wall_time_s = elapsed
    logger.info(
        "%s vortex l_max=%d t_end=%g: mae=%.4e linf=%.4e area loss=%.3f%% (%.1fs)",
        method,
        l_max,
        2.0 * t_mid,
        report.mae,
        report.linf,
        report.area_loss_pct,
        elapsed,
    )
    areas, rows = recorder.frames()
    return BenchmarkRun(
        method, [report], final, exact, snapshots={"t_mid": middle}, areas=areas, diagnostics=rows
    )


def write_outputs(
    run: BenchmarkRun, out_dir: str, compare: Optional[BenchmarkRun] = None
) -> List[str]:
    """
    Write the files of a benchmark run into out_dir.

    reports.csv holds deterministic columns only; wall times go to
    timings.csv. With compare, the area plot shows both runs.

    Returns:
        List[str]: Paths written
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def target(name: str) -> str:
        path = os.path.join(out_dir, name)
        written.append(path)
        return path

    reports = pd.DataFrame([r.to_row() for r in run.reports])
    reports.insert(0, "method", run.method)
    reports.to_csv(target("reports.csv"), index=False, float_format="%.17g")
    pd.DataFrame(
        [{"label": r.label, "wall_time_s": r.wall_time_s} for r in run.reports]
    ).to_csv(target("timings.csv"), index=False)

    emit_contour(run.final, target("contour_final.csv"))
    plot_contour(run.final, target("contour_final.svg"), run.reference, title=f"{run.method} final")
    for label, state in run.snapshots.items():
        emit_contour(state, target(f"contour_{label}.csv"))

    if len(run.diagnostics):
        run.diagnostics.to_csv(target("diagnostics.csv"), index=False, float_format="%.17g")

    areas = run.areas
    if compare is not None:
        areas = pd.concat([compare.areas, run.areas], ignore_index=True)
    if len(areas):
        plot_area_evolution(areas, target("area_evolution.svg"))
    return written
