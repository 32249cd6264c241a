"""
Training-data generation from paired coarse/fine simulations.

A generation run sweeps random divergence-free velocity fields, circle radii
and circle centers. For each configuration a coarse and a fine grid are
advected side by side; packets collected on the coarse grid are labeled with
the fine grid's level-set at the same arrival points.
"""

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import GenerationConfig
from HybridAdvection.advect import (
    NodeOverrides,
    advect_coarse_grid,
    advect_fine_grid,
    initial_state,
    time_steps,
)
from HybridAdvection.constants import (
    MAX_FIELD_REDRAWS,
    MIN_BIN_MEMBERS,
    PACKET_COLUMNS,
    PACKET_SIZE,
    SPEED_LATTICE_RESOLUTION,
    SPLIT_FOLDS,
    STREAM_MODES,
    STREAM_WAVENUMBERS,
    TARGET_COLUMN,
)
from HybridAdvection.field_ops import normals_and_curvature, second_derivatives
from HybridAdvection.interp import QUADRATIC, sample
from HybridAdvection.manifest import ManifestManager
from HybridAdvection.metrics import circle_sdf
from HybridAdvection.models import (
    ConfigurationRecord,
    DatasetSplits,
    LearningTuple,
    SimulationState,
)
from HybridAdvection.sampling import collect_data_packets, reflect_packets, standard_form
from HybridAdvection.validators import validate_fractions

logger = logging.getLogger(__name__)

TUPLE_COLUMNS = PACKET_COLUMNS + [TARGET_COLUMN]
TUPLE_SIZE = PACKET_SIZE + 1


@dataclass(frozen=True)
class VelocityFieldSpec:
    """
    A normalized velocity field derived from a sinusoidal stream function.

    psi(x, y) = sum_k a_k sin(pi p_k x + alpha_k) sin(pi q_k y + beta_k) and
    u = scale * (d psi/dy, -d psi/dx), which is divergence-free.

    Attributes:
        amplitudes (Tuple[float, ...]): a_k
        wavenumbers (Tuple[Tuple[int, int], ...]): (p_k, q_k)
        phases (Tuple[Tuple[float, float], ...]): (alpha_k, beta_k)
        scale (float): Normalization factor
    """

    amplitudes: Tuple[float, ...]
    wavenumbers: Tuple[Tuple[int, int], ...]
    phases: Tuple[Tuple[float, float], ...]
    scale: float = 1.0

    def _terms(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        a = np.asarray(self.amplitudes)
        kx = math.pi * np.asarray([w[0] for w in self.wavenumbers], dtype=np.float64)
        ky = math.pi * np.asarray([w[1] for w in self.wavenumbers], dtype=np.float64)
        ax = pts[:, 0:1] * kx + np.asarray([p[0] for p in self.phases])
        ay = pts[:, 1:2] * ky + np.asarray([p[1] for p in self.phases])
        return a, kx, ky, ax, ay

    def __call__(self, points: np.ndarray) -> np.ndarray:
        a, kx, ky, ax, ay = self._terms(points)
        u = np.sum(a * np.sin(ax) * ky * np.cos(ay), axis=1)
        v = -np.sum(a * kx * np.cos(ax) * np.sin(ay), axis=1)
        return self.scale * np.stack([u, v], axis=1)

    def divergence(self, points: np.ndarray) -> np.ndarray:
        """Analytic du/dx + dv/dy."""
        a, kx, ky, ax, ay = self._terms(points)
        du_dx = np.sum(a * kx * np.cos(ax) * ky * np.cos(ay), axis=1)
        dv_dy = -np.sum(a * kx * np.cos(ax) * ky * np.cos(ay), axis=1)
        return self.scale * (du_dx + dv_dy)


def _speed_lattice() -> np.ndarray:
    t = np.linspace(-1.0, 1.0, SPEED_LATTICE_RESOLUTION)
    gx, gy = np.meshgrid(t, t, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def generate_velocity_field(seed: int) -> Tuple[VelocityFieldSpec, VelocityFieldSpec]:
    """
    Draw a random divergence-free velocity field with unit peak speed.

    The peak is measured over a SPEED_LATTICE_RESOLUTION^2 lattice on [-1, 1]^2.

    Args:
        seed: Seed of the draw

    Returns:
        Tuple: (velocity function, spec); the spec is itself the callable

    Raises:
        RuntimeError: If every draw within MAX_FIELD_REDRAWS is degenerate
    """
    rng = np.random.default_rng(seed)
    lattice = _speed_lattice()
    for _ in range(MAX_FIELD_REDRAWS):
        spec = VelocityFieldSpec(
            amplitudes=tuple(float(a) for a in rng.uniform(-1.0, 1.0, STREAM_MODES)),
            wavenumbers=tuple(
                (int(p), int(q))
                for p, q in rng.choice(STREAM_WAVENUMBERS, size=(STREAM_MODES, 2))
            ),
            phases=tuple(
                (float(a), float(b))
                for a, b in rng.uniform(0.0, 2.0 * math.pi, (STREAM_MODES, 2))
            ),
        )
        peak = float(np.max(np.linalg.norm(spec(lattice), axis=1)))
        if peak > 1e-8:
            normalized = dataclasses.replace(spec, scale=1.0 / peak)
            return normalized, normalized
        logger.debug("degenerate velocity draw for seed %d, redrawing", seed)
    raise RuntimeError(f"no usable velocity field after {MAX_FIELD_REDRAWS} draws (seed {seed})")


def _tuple_rows(packets: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Standard-form tuples, each followed by its reflected twin."""
    standard, targets, _ = standard_form(packets, targets)
    original = np.hstack([standard, targets[:, None]])
    reflected = np.hstack([reflect_packets(standard), targets[:, None]])
    return np.stack([original, reflected], axis=1).reshape(-1, TUPLE_SIZE)


def interleave_advect_and_collect(
    coarse0: SimulationState,
    fine0: SimulationState,
    config: GenerationConfig,
    velocity_fn,
) -> np.ndarray:
    """
    Advect coarse and fine grids together and harvest learning tuples.

    Every coarse step first brings the fine grid to the coarse target time.
    On even, untruncated steps, packets are collected on the coarse grid,
    labeled with the fine level-set at their arrival points (divided by h_c),
    and the labels are pinned into the coarse update; pinned vertices lagging
    the interface are protected from reinitialization.

    Returns:
        np.ndarray: Tuples of shape (m, PACKET_SIZE + 1), m even
    """
    h_c = coarse0.grid.h_min
    coarse, fine = coarse0, fine0
    batches: List[np.ndarray] = []
    for iteration, dt, truncated in time_steps(coarse0.time, config.t_end, config.cfl * h_c):
        t_next = coarse.time + dt
        fine_next = advect_fine_grid(
            fine, fine.time, t_next, config.nu, velocity_fn, config.b_c, config.b_f, config.cfl
        )
        overrides = None
        normals = None
        if iteration % 2 == 0 and not truncated:
            normals, curvature = normals_and_curvature(coarse.phi)
            phixx, phiyy = second_derivatives(coarse.phi)
            packets, coords = collect_data_packets(coarse, normals, curvature, phixx, phiyy, dt)
            if len(packets):
                fxx, fyy = second_derivatives(fine_next.phi)
                fine_values = sample(fine_next.phi, coords, QUADRATIC, fxx, fyy, clamp=True)
                batches.append(_tuple_rows(packets, fine_values / h_c))
                overrides = NodeOverrides.from_coords(coarse.grid, coords, fine_values)
        coarse = advect_coarse_grid(
            coarse,
            fine_next,
            config.nu,
            iteration,
            config.r_freq,
            velocity_fn=velocity_fn,
            overrides=overrides,
            normals_prev=normals,
        )
        fine = fine_next
    if not batches:
        return np.zeros((0, TUPLE_SIZE))
    return np.vstack(batches)


def configurations(config: GenerationConfig) -> List[ConfigurationRecord]:
    """
    Enumerate the (field, radius, center) configurations of a run.

    Field f uses seed config.seed * 1000 + f; its centers are drawn uniformly
    from [-1/2, 1/2]^2 by a generator seeded with (config.seed, f).
    """
    records = []
    for f in range(config.n_fields):
        rng = np.random.default_rng((config.seed, f))
        for radius in config.radii:
            for _ in range(config.n_centers):
                cx, cy = rng.uniform(-0.5, 0.5, 2)
                records.append(
                    ConfigurationRecord(
                        index=len(records),
                        field_index=f,
                        field_seed=config.seed * 1000 + f,
                        radius=float(radius),
                        center=(float(cx), float(cy)),
                    )
                )
    return records


def run_configuration(config: GenerationConfig, record: ConfigurationRecord) -> np.ndarray:
    """Generate the tuples of a single configuration."""
    velocity, _ = generate_velocity_field(record.field_seed)
    phi_fn = circle_sdf(record.center, record.radius)
    coarse0 = initial_state(config.coarse_grid(), phi_fn, velocity, nu=config.nu)
    fine0 = initial_state(
        config.fine_grid(), phi_fn, velocity, nu=int(round(config.b_c * config.nu))
    )
    return interleave_advect_and_collect(coarse0, fine0, config, velocity)


def _run_job(args: Tuple[GenerationConfig, ConfigurationRecord]) -> np.ndarray:
    return run_configuration(*args)


def generate_dataset(
    config: GenerationConfig, manifest: Optional[ManifestManager] = None
) -> np.ndarray:
    """
    Run every configuration and concatenate their tuples.

    Results are concatenated in configuration order whatever the worker
    count, so a seed always reproduces the same dataset.

    Args:
        config: Generation settings
        manifest: Optional manifest recording the run

    Returns:
        np.ndarray: Tuples of shape (m, PACKET_SIZE + 1)
    """
    records = configurations(config)
    run_id = manifest.start_run(config.to_dict(), config.seed) if manifest else None
    logger.info(
        "generating data: %d configuration(s), h_c=%g, h_f=%g, workers=%d",
        len(records),
        config.h_c,
        config.h_f,
        config.workers,
    )
    jobs = [(config, record) for record in records]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(_run_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_job(job))
            record = job[1]
            logger.info(
                "configuration %d/%d (field %d, r=%.4f): %d tuples",
                record.index + 1,
                len(records),
                record.field_index,
                record.radius,
                len(results[-1]),
            )

    for record, rows in zip(records, results):
        record.n_tuples = int(rows.shape[0])
    tuples = np.vstack(results) if results else np.zeros((0, TUPLE_SIZE))
    if manifest is not None:
        manifest.add_configurations(run_id, records)
        manifest.finish_run(run_id, int(tuples.shape[0]))
    logger.info("generated %d tuples", tuples.shape[0])
    return tuples


def as_learning_tuples(tuples: np.ndarray) -> List[LearningTuple]:
    return [LearningTuple.from_array(row) for row in np.asarray(tuples)]


# ----------------------------------------------------------------------
# splitting
# ----------------------------------------------------------------------


def _merge_small_bins(labels: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Fold bins with fewer than MIN_BIN_MEMBERS members into a neighbor."""
    labels = labels.copy()
    merged: List[int] = []
    while True:
        present, counts = np.unique(labels, return_counts=True)
        small = np.flatnonzero(counts < MIN_BIN_MEMBERS)
        if small.size == 0 or present.size == 1:
            return labels, merged
        k = small[0]
        neighbor = present[k + 1] if k + 1 < present.size else present[k - 1]
        labels[labels == present[k]] = neighbor
        merged.append(int(present[k]))


def _bin_allocation(size: int, folds: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Largest-remainder bucket counts for one bin.

    Bucket b ideally holds size * folds[b] / SPLIT_FOLDS members; every bucket
    ends up within one sample of that. Remainder ties are broken in a seeded
    random order.
    """
    counts, remainder = np.divmod(size * folds, SPLIT_FOLDS)
    order = np.lexsort((rng.permutation(len(folds)), -remainder))
    counts[order[: size - int(counts.sum())]] += 1
    return counts


def stratified_split(
    tuples: np.ndarray,
    fractions: Tuple[float, float, float] = (0.7, 0.1, 0.1),
    discard: float = 0.1,
    bins: int = 100,
    seed: int = 0,
) -> DatasetSplits:
    """
    Split tuples into train, test and validation sets stratified by target.

    Targets are binned into equal-width intervals. Each bin is shuffled and
    cut into buckets by largest remainder, so every bucket holds its share of
    every bin to within one sample.

    Args:
        tuples: Learning tuples, shape (m, PACKET_SIZE + 1)
        fractions: Train, test and validation shares
        discard: Share left out
        bins: Number of target bins
        seed: Shuffle seed

    Returns:
        DatasetSplits: The three splits (rows kept in input order)

    Raises:
        ValueError: If there are fewer than SPLIT_FOLDS tuples, or the fractions
            are not multiples of 1/SPLIT_FOLDS
    """
    tuples = np.asarray(tuples, dtype=np.float64)
    if tuples.ndim != 2 or tuples.shape[1] != TUPLE_SIZE:
        raise ValueError(f"tuples must have shape (m, {TUPLE_SIZE}), got {tuples.shape}")
    if bins < 2:
        raise ValueError(f"bins must be at least 2, got {bins}")
    counts = validate_fractions(fractions, discard, SPLIT_FOLDS)
    n = tuples.shape[0]
    if n < SPLIT_FOLDS:
        raise ValueError(f"need at least {SPLIT_FOLDS} tuples to split, got {n}")

    targets = tuples[:, -1]
    if np.ptp(targets) == 0:
        labels = np.zeros(n, dtype=np.int64)
        merged: List[int] = []
    else:
        labels = np.asarray(pd.cut(targets, bins, labels=False), dtype=np.int64)
        labels, merged = _merge_small_bins(labels)
        if merged:
            logger.warning("merged %d sparse target bin(s) into neighbors: %s", len(merged), merged)
    folds = np.asarray(counts, dtype=np.int64)
    rng = np.random.default_rng(seed)
    bucket = np.empty(n, dtype=np.int64)
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        sizes = _bin_allocation(members.size, folds, rng)
        bucket[members] = np.repeat(np.arange(len(folds)), sizes)
    train = bucket == 0
    test = bucket == 1
    validation = bucket == 2
    return DatasetSplits(
        train=tuples[train],
        test=tuples[test],
        validation=tuples[validation],
        discarded=int(np.count_nonzero(bucket == 3)),
        merged_bins=merged,
    )


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------


def save_dataset(path: str, tuples: np.ndarray) -> None:
    """Write tuples as CSV with 17 significant digits."""
    frame = pd.DataFrame(np.asarray(tuples, dtype=np.float64), columns=TUPLE_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")


def load_dataset(path: str) -> np.ndarray:
    """
    Read a dataset written by save_dataset.

    Raises:
        ValueError: If the columns do not match the tuple layout
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != TUPLE_COLUMNS:
        raise ValueError(f"{path} does not have the expected dataset columns")
    values = frame.to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path} contains non-finite values")
    return values
