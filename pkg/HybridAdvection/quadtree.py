"""
Non-graded quadtree grids over a rectangular macromesh.

Leaves are stored as flat arrays of integer lattice coordinates (multiples
of h_min measured from the domain origin), so vertex deduplication, point
location and neighbor lookup are exact integer operations. Grids are
immutable: regridding returns a new QuadtreeGrid.
"""

import logging
import math
from functools import cached_property
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import sparse

from HybridAdvection.constants import STENCIL_OFFSETS
from HybridAdvection.errors import OutOfDomainError
from HybridAdvection.models import GridConfig, LeafCell, NodeStencil
from HybridAdvection.validators import validate_finite, validate_points

logger = logging.getLogger(__name__)

LevelSetFunction = Callable[[np.ndarray], np.ndarray]

SQRT2 = math.sqrt(2.0)


def refinement_mask(
    corner_values: np.ndarray, levels: np.ndarray, config: GridConfig
) -> np.ndarray:
    """
    Evaluate the refinement criterion for a batch of cells.

    A cell C below l_max is marked when min_v |phi(v)| <= Lip * diag(C). With a
    uniform band of half-width B it is also marked when
    min_v |phi(v)| <= B * sqrt(2) * h_min + Lip * diag(C) / 2, which covers every
    point of C lying within the band for a Lipschitz phi.

    Args:
        corner_values: Level-set values at the four corners, shape (n, 4)
        levels: Level of each cell, shape (n,)
        config: Grid settings

    Returns:
        np.ndarray: Boolean mask of cells to subdivide
    """
    levels = np.asarray(levels)
    h = config.h_min
    diag = np.ldexp(1.0, config.l_max - levels) * h * SQRT2
    nearest = np.min(np.abs(corner_values), axis=1)
    mark = nearest <= config.lip * diag
    if config.band_halfwidth > 0:
        mark |= nearest <= config.band_halfwidth * SQRT2 * h + 0.5 * config.lip * diag
    return mark & (levels < config.l_max)


class QuadtreeGrid:
    """
    Adaptive grid of square leaves with deduplicated vertices.

    Leaves are kept sorted by their lower-left lattice key (x first, then y),
    which makes "smallest leaf index" and "lexicographically smallest
    lower-left corner" the same thing. Nodes are sorted the same way.

    Attributes:
        config (GridConfig): Geometry and refinement settings
        leaf_ix, leaf_iy (np.ndarray): Lower-left lattice coordinates of leaves
        leaf_level (np.ndarray): Refinement level of leaves
        leaf_size (np.ndarray): Leaf width in lattice units
        leaf_corners (np.ndarray): Node indices of leaf corners, slot order
            00, 01, 10, 11, shape (n_leaves, 4)
        node_keys (np.ndarray): Sorted integer lattice keys of the vertices
        node_ix, node_iy (np.ndarray): Lattice coordinates of the vertices
    """

    def __init__(
        self,
        config: GridConfig,
        leaf_ix: np.ndarray,
        leaf_iy: np.ndarray,
        leaf_level: np.ndarray,
    ):
        self.config = config
        nx, ny = config.lattice_shape
        self._stride = ny + 1
        ix = np.asarray(leaf_ix, dtype=np.int64)
        iy = np.asarray(leaf_iy, dtype=np.int64)
        level = np.asarray(leaf_level, dtype=np.int64)
        order = np.argsort(ix * self._stride + iy, kind="stable")
        self.leaf_ix = ix[order]
        self.leaf_iy = iy[order]
        self.leaf_level = level[order]
        if np.any(self.leaf_level < 0) or np.any(self.leaf_level > config.l_max):
            raise ValueError("leaf levels must lie in [0, l_max]")
        self.leaf_size = np.left_shift(np.int64(1), config.l_max - self.leaf_level)

        covered = int(np.sum(self.leaf_size * self.leaf_size))
        if covered != nx * ny:
            raise ValueError(
                f"leaves cover {covered} lattice cells, domain has {nx * ny}"
            )

        s = self.leaf_size
        cx = np.stack([self.leaf_ix, self.leaf_ix, self.leaf_ix + s, self.leaf_ix + s], axis=1)
        cy = np.stack([self.leaf_iy, self.leaf_iy + s, self.leaf_iy, self.leaf_iy + s], axis=1)
        corner_keys = cx * self._stride + cy
        self.node_keys = np.unique(corner_keys)
        self.leaf_corners = np.searchsorted(self.node_keys, corner_keys)
        self.node_ix = self.node_keys // self._stride
        self.node_iy = self.node_keys % self._stride
        self._neighbor_ops: Dict[Tuple[int, int], Tuple[sparse.csr_matrix, np.ndarray]] = {}

        for array in (
            self.leaf_ix,
            self.leaf_iy,
            self.leaf_level,
            self.leaf_size,
            self.leaf_corners,
            self.node_keys,
            self.node_ix,
            self.node_iy,
        ):
            array.setflags(write=False)

    @classmethod
    def uniform(cls, config: GridConfig) -> "QuadtreeGrid":
        """Grid with every leaf at l_max."""
        nx, ny = config.lattice_shape
        gx, gy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        return cls(config, gx.ravel(), gy.ravel(), np.full(nx * ny, config.l_max))

    # ------------------------------------------------------------------
    # basic geometry
    # ------------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return int(self.node_keys.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_ix.shape[0])

    @property
    def h_min(self) -> float:
        return self.config.h_min

    @property
    def l_max(self) -> int:
        return self.config.l_max

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.config.domain_min, dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.config.domain_max, dtype=np.float64)

    @cached_property
    def node_coords(self) -> np.ndarray:
        lattice = np.stack([self.node_ix, self.node_iy], axis=1).astype(np.float64)
        coords = self.origin + lattice * self.h_min
        coords.setflags(write=False)
        return coords

    @cached_property
    def leaf_area(self) -> np.ndarray:
        width = self.leaf_size.astype(np.float64) * self.h_min
        return width * width

    def leaf_cell(self, index: int) -> LeafCell:
        """Describe leaf `index` as a LeafCell."""
        if not 0 <= index < self.n_leaves:
            raise ValueError(f"invalid leaf index {index}")
        h = self.h_min
        return LeafCell(
            index=int(index),
            level=int(self.leaf_level[index]),
            x0=float(self.origin[0] + self.leaf_ix[index] * h),
            y0=float(self.origin[1] + self.leaf_iy[index] * h),
            width=float(self.leaf_size[index] * h),
        )

    def evaluate(self, fn: LevelSetFunction) -> np.ndarray:
        """
        Evaluate a function of points at every node.

        Args:
            fn: Callable mapping an (n, 2) array of points to n values or
                an (n, 2) array of vectors

        Returns:
            np.ndarray: Nodal values

        Raises:
            ValueError: If fn returns non-finite values
        """
        return validate_finite(fn(self.node_coords), "evaluated field")

    def same_leaves(self, other: "QuadtreeGrid") -> bool:
        return (
            self.n_leaves == other.n_leaves
            and np.array_equal(self.leaf_ix, other.leaf_ix)
            and np.array_equal(self.leaf_iy, other.leaf_iy)
            and np.array_equal(self.leaf_level, other.leaf_level)
        )

    # ------------------------------------------------------------------
    # lattice keys and lookups
    # ------------------------------------------------------------------

    def lookup_keys(self, keys: np.ndarray) -> np.ndarray:
        """Node index of each lattice key, -1 where no vertex exists."""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self.node_keys, keys)
        pos_c = np.minimum(pos, self.n_nodes - 1)
        found = self.node_keys[pos_c] == keys
        return np.where(found, pos_c, -1)

    def _lattice_key(self, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
        nx, ny = self.config.lattice_shape
        inside = (ix >= 0) & (ix <= nx) & (iy >= 0) & (iy <= ny)
        return np.where(inside, ix * self._stride + iy, -1)

    def lattice_keys(self, coords: np.ndarray) -> np.ndarray:
        """
        Integer lattice keys of points that sit exactly on the h_min lattice.

        Args:
            coords: Points, shape (n, 2)

        Returns:
            np.ndarray: Keys, comparable across grids sharing a GridConfig

        Raises:
            ValueError: If a point is off the lattice or outside the domain
        """
        pts = validate_points(coords, "coords")
        u = (pts - self.origin) / self.h_min
        rounded = np.rint(u)
        off = np.abs(u - rounded) > 1e-9 * np.maximum(1.0, np.abs(u))
        if np.any(off):
            raise ValueError(
                f"{int(np.count_nonzero(off.any(axis=1)))} coordinate(s) are not on the lattice"
            )
        ix = rounded[:, 0].astype(np.int64)
        iy = rounded[:, 1].astype(np.int64)
        keys = self._lattice_key(ix, iy)
        if np.any(keys < 0):
            raise ValueError("lattice coordinate outside the domain")
        return keys

    def keys_to_coords(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        lattice = np.stack([keys // self._stride, keys % self._stride], axis=1)
        return self.origin + lattice.astype(np.float64) * self.h_min

    def node_index(self, coords: np.ndarray) -> np.ndarray:
        """
        Node indices of vertex coordinates.

        Raises:
            ValueError: If a coordinate is off the lattice or not a vertex
        """
        idx = self.lookup_keys(self.lattice_keys(coords))
        if np.any(idx < 0):
            raise ValueError(
                f"{int(np.count_nonzero(idx < 0))} coordinate(s) are not grid vertices"
            )
        return idx

    @cached_property
    def owner_map(self) -> np.ndarray:
        """Leaf index owning each finest lattice cell, shape lattice_shape."""
        nx, ny = self.config.lattice_shape
        owners = np.empty((nx, ny), dtype=np.int64)
        for size in np.unique(self.leaf_size):
            leaves = np.flatnonzero(self.leaf_size == size)
            offs = np.arange(size)
            xs = self.leaf_ix[leaves][:, None, None] + offs[None, :, None]
            ys = self.leaf_iy[leaves][:, None, None] + offs[None, None, :]
            owners[xs, ys] = leaves[:, None, None]
        owners.setflags(write=False)
        return owners

    def locate_owners(self, points: np.ndarray, clamp: bool = False) -> np.ndarray:
        """
        Leaf index owning each point.

        Points on shared edges or corners resolve to the leaf with the
        lexicographically smallest lower-left corner.

        Args:
            points: Query points, shape (n, 2)
            clamp: Clamp outside points to the boundary instead of failing

        Returns:
            np.ndarray: Leaf indices

        Raises:
            OutOfDomainError: If a point lies outside and clamp is False
        """
        pts = self._inside_points(points, clamp)
        nx, ny = self.config.lattice_shape
        u = (pts - self.origin) / self.h_min
        lo = np.ceil(u).astype(np.int64) - 1
        hi = np.floor(u).astype(np.int64)
        lo[:, 0] = np.clip(lo[:, 0], 0, nx - 1)
        lo[:, 1] = np.clip(lo[:, 1], 0, ny - 1)
        hi[:, 0] = np.clip(hi[:, 0], 0, nx - 1)
        hi[:, 1] = np.clip(hi[:, 1], 0, ny - 1)
        omap = self.owner_map
        return np.minimum.reduce(
            [
                omap[lo[:, 0], lo[:, 1]],
                omap[lo[:, 0], hi[:, 1]],
                omap[hi[:, 0], lo[:, 1]],
                omap[hi[:, 0], hi[:, 1]],
            ]
        )

    def locate_owner(self, p: Tuple[float, float]) -> LeafCell:
        """Leaf whose closed extent contains p (see locate_owners)."""
        return self.leaf_cell(int(self.locate_owners(np.asarray([p]))[0]))

    def _inside_points(self, points: np.ndarray, clamp: bool) -> np.ndarray:
        pts = validate_points(points)
        outside = np.any((pts < self.origin) | (pts > self.upper), axis=1)
        if np.any(outside):
            if not clamp:
                bad = np.flatnonzero(outside)
                raise OutOfDomainError(
                    f"{bad.size} point(s) outside the domain, first at {pts[bad[0]].tolist()}",
                    bad,
                )
            pts = np.clip(pts, self.origin, self.upper)
        return pts

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return np.all((pts >= self.origin) & (pts <= self.upper), axis=1)

    # ------------------------------------------------------------------
    # interpolation weights and hanging-node constraints
    # ------------------------------------------------------------------

    def bilinear_weights(
        self, points: np.ndarray, clamp: bool = False
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Owner leaves and bilinear corner weights of query points.

        Returns:
            Tuple: (owners, weights of shape (n, 4) in slot order 00, 01, 10, 11,
                    alpha, beta) where alpha, beta are cell-local coordinates
        """
        pts = self._inside_points(points, clamp)
        owners = self.locate_owners(pts)
        u = (pts - self.origin) / self.h_min
        size = self.leaf_size[owners].astype(np.float64)
        alpha = np.clip((u[:, 0] - self.leaf_ix[owners]) / size, 0.0, 1.0)
        beta = np.clip((u[:, 1] - self.leaf_iy[owners]) / size, 0.0, 1.0)
        weights = np.stack(
            [
                (1.0 - alpha) * (1.0 - beta),
                (1.0 - alpha) * beta,
                alpha * (1.0 - beta),
                alpha * beta,
            ],
            axis=1,
        )
        return owners, weights, alpha, beta

    def interpolation_matrix(
        self, points: np.ndarray, clamp: bool = False
    ) -> sparse.csr_matrix:
        """
        Sparse operator mapping nodal values to bilinear values at points.

        Hanging corners are replaced by the coarse-side interpolant.
        """
        owners, weights, _, _ = self.bilinear_weights(points, clamp)
        m = owners.shape[0]
        rows = np.repeat(np.arange(m), 4)
        cols = self.leaf_corners[owners].ravel()
        matrix = sparse.csr_matrix(
            (weights.ravel(), (rows, cols)), shape=(m, self.n_nodes)
        )
        if self.has_hanging_nodes:
            matrix = matrix @ self.constraint_matrix
        return matrix.tocsr()

    @cached_property
    def _hanging_parent(self) -> np.ndarray:
        """Coarse leaf each hanging node lies on, -1 for independent nodes."""
        nx, ny = self.config.lattice_shape
        omap = self.owner_map
        parent = np.full(self.n_nodes, -1, dtype=np.int64)
        parent_size = np.zeros(self.n_nodes, dtype=np.int64)
        for ox, oy in ((-1, -1), (-1, 0), (0, -1), (0, 0)):
            cx = self.node_ix + ox
            cy = self.node_iy + oy
            valid = (cx >= 0) & (cx < nx) & (cy >= 0) & (cy < ny)
            leaf = np.full(self.n_nodes, -1, dtype=np.int64)
            leaf[valid] = omap[cx[valid], cy[valid]]
            size = np.where(valid, self.leaf_size[leaf], 0)
            rx = self.node_ix - self.leaf_ix[leaf]
            ry = self.node_iy - self.leaf_iy[leaf]
            corner = ((rx == 0) | (rx == size)) & ((ry == 0) | (ry == size))
            better = valid & ~corner & (size > parent_size)
            parent[better] = leaf[better]
            parent_size[better] = size[better]
        return parent

    @property
    def hanging_mask(self) -> np.ndarray:
        return self._hanging_parent >= 0

    @property
    def has_hanging_nodes(self) -> bool:
        return bool(np.any(self.hanging_mask))

    @cached_property
    def constraint_matrix(self) -> sparse.csr_matrix:
        """
        Operator replacing each hanging value by its coarse-side interpolant.

        Independent rows are identity rows. Chains of hanging nodes (a coarse
        corner that is itself hanging) are resolved by repeated substitution.
        """
        n = self.n_nodes
        parent = self._hanging_parent
        hanging = np.flatnonzero(parent >= 0)
        free = np.flatnonzero(parent < 0)
        leaf = parent[hanging]
        size = self.leaf_size[leaf].astype(np.float64)
        alpha = (self.node_ix[hanging] - self.leaf_ix[leaf]) / size
        beta = (self.node_iy[hanging] - self.leaf_iy[leaf]) / size
        weights = np.stack(
            [(1 - alpha) * (1 - beta), (1 - alpha) * beta, alpha * (1 - beta), alpha * beta],
            axis=1,
        )
        rows = np.concatenate([free, np.repeat(hanging, 4)])
        cols = np.concatenate([free, self.leaf_corners[leaf].ravel()])
        vals = np.concatenate([np.ones(free.size), weights.ravel()])
        step = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        step.eliminate_zeros()
        closure = step
        for _ in range(self.l_max + 1):
            nxt = (step @ closure).tocsr()
            nxt.eliminate_zeros()
            if (nxt != closure).nnz == 0:
                break
            closure = nxt
        return closure

    def constrain(self, values: np.ndarray) -> np.ndarray:
        """Copy of nodal values with hanging nodes made consistent."""
        values = np.asarray(values, dtype=np.float64)
        if not self.has_hanging_nodes:
            return values.copy()
        return np.asarray(self.constraint_matrix @ values)

    # ------------------------------------------------------------------
    # stencils
    # ------------------------------------------------------------------

    @cached_property
    def stencil_table(self) -> np.ndarray:
        """Neighbor node indices at +-h_min offsets, -1 when absent, shape (n, 8)."""
        table = np.empty((self.n_nodes, len(STENCIL_OFFSETS)), dtype=np.int64)
        for k, (dx, dy) in enumerate(STENCIL_OFFSETS):
            keys = self._lattice_key(self.node_ix + dx, self.node_iy + dy)
            found = self.lookup_keys(np.where(keys >= 0, keys, 0))
            table[:, k] = np.where(keys >= 0, found, -1)
        table.setflags(write=False)
        return table

    @cached_property
    def complete_mask(self) -> np.ndarray:
        return np.all(self.stencil_table >= 0, axis=1)

    def node_stencil(self, node: int) -> NodeStencil:
        """
        The h-uniform 3x3 neighborhood of a node.

        Raises:
            ValueError: If node is not a valid index
        """
        if not 0 <= node < self.n_nodes:
            raise ValueError(f"invalid node index {node}")
        row = self.stencil_table[node]
        missing = tuple(off for off, idx in zip(STENCIL_OFFSETS, row) if idx < 0)
        return NodeStencil(
            center=int(node),
            neighbors=tuple(int(i) for i in row),
            complete=not missing,
            missing=missing,
        )

    @cached_property
    def node_spacing(self) -> np.ndarray:
        """Width (lattice units) of the smallest leaf incident to each node."""
        spacing = np.full(self.n_nodes, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(
            spacing, self.leaf_corners.ravel(), np.repeat(self.leaf_size, 4)
        )
        return spacing

    def neighbor_operator(self, dx: int, dy: int) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """
        Sampling operator for the point node + spacing * (dx, dy).

        The neighbor distance is the node's own spacing, so on uniform regions
        this is an exact vertex lookup and elsewhere a bilinear sample.

        Returns:
            Tuple: (operator of shape (n, n), mask of nodes whose target lies
                    inside the domain; other rows are empty)
        """
        key = (int(dx), int(dy))
        if key not in self._neighbor_ops:
            nx, ny = self.config.lattice_shape
            tx = self.node_ix + dx * self.node_spacing
            ty = self.node_iy + dy * self.node_spacing
            available = (tx >= 0) & (tx <= nx) & (ty >= 0) & (ty <= ny)
            rows = np.flatnonzero(available)
            targets = np.stack([tx[rows], ty[rows]], axis=1).astype(np.float64)
            sampler = self.interpolation_matrix(self.origin + targets * self.h_min)
            select = sparse.csr_matrix(
                (np.ones(rows.size), (rows, np.arange(rows.size))),
                shape=(self.n_nodes, rows.size),
            )
            available.setflags(write=False)
            self._neighbor_ops[key] = ((select @ sampler).tocsr(), available)
        return self._neighbor_ops[key]

    # ------------------------------------------------------------------
    # regridding
    # ------------------------------------------------------------------

    def refine_and_coarsen(self, node_values: np.ndarray) -> "QuadtreeGrid":
        """
        One refinement/coarsening sweep driven by nodal level-set values.

        Leaves satisfying the criterion are split once; families of four
        sibling leaves are merged when their parent fails the criterion and no
        sibling is being split.

        Args:
            node_values: Level-set values at this grid's nodes

        Returns:
            QuadtreeGrid: The updated grid (possibly identical in leaves)
        """
        values = validate_finite(node_values, "node_values")
        if values.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} nodal values, got {values.shape}")
        cfg = self.config
        split = refinement_mask(values[self.leaf_corners], self.leaf_level, cfg)

        merged = np.zeros(self.n_leaves, dtype=bool)
        parents_ix: List[np.ndarray] = []
        parents_iy: List[np.ndarray] = []
        parents_level: List[np.ndarray] = []
        candidates = np.flatnonzero(self.leaf_level > 0)
        if candidates.size:
            psize = 2 * self.leaf_size[candidates]
            pix = (self.leaf_ix[candidates] // psize) * psize
            piy = (self.leaf_iy[candidates] // psize) * psize
            plevel = self.leaf_level[candidates] - 1
            family = (pix * self._stride + piy) * (cfg.l_max + 1) + plevel
            _, first, inverse, counts = np.unique(
                family, return_index=True, return_inverse=True, return_counts=True
            )
            split_children = np.bincount(inverse, weights=split[candidates].astype(np.float64))
            full = counts == 4
            f_ix, f_iy, f_size = pix[first], piy[first], psize[first]
            corner_keys = np.stack(
                [
                    f_ix * self._stride + f_iy,
                    f_ix * self._stride + f_iy + f_size,
                    (f_ix + f_size) * self._stride + f_iy,
                    (f_ix + f_size) * self._stride + f_iy + f_size,
                ],
                axis=1,
            )
            corner_nodes = self.lookup_keys(corner_keys)
            full &= np.all(corner_nodes >= 0, axis=1)
            parent_values = values[np.where(corner_nodes >= 0, corner_nodes, 0)]
            keep_parent = refinement_mask(parent_values, plevel[first], cfg)
            merge_family = full & ~keep_parent & (split_children == 0)
            merged[candidates] = merge_family[inverse]
            parents_ix.append(f_ix[merge_family])
            parents_iy.append(f_iy[merge_family])
            parents_level.append(plevel[first][merge_family])

        keep = ~split & ~merged
        half = self.leaf_size[split] // 2
        six, siy, slev = self.leaf_ix[split], self.leaf_iy[split], self.leaf_level[split] + 1
        new_ix = np.concatenate(
            [self.leaf_ix[keep], six, six, six + half, six + half, *parents_ix]
        )
        new_iy = np.concatenate(
            [self.leaf_iy[keep], siy, siy + half, siy, siy + half, *parents_iy]
        )
        new_level = np.concatenate(
            [self.leaf_level[keep], slev, slev, slev, slev, *parents_level]
        )
        if not split.any() and not merged.any():
            return self
        return QuadtreeGrid(cfg, new_ix, new_iy, new_level)

    # ------------------------------------------------------------------
    # debugging output
    # ------------------------------------------------------------------

    def format_dump(self) -> str:
        """Plain-text listing of leaves and vertices, one record per line."""
        lines = [f"# leaves {self.n_leaves}: level x0 y0 width"]
        for i in range(self.n_leaves):
            cell = self.leaf_cell(i)
            lines.append(f"leaf {cell.level} {cell.x0!r} {cell.y0!r} {cell.width!r}")
        lines.append(f"# nodes {self.n_nodes}: index x y")
        for i, (x, y) in enumerate(self.node_coords):
            lines.append(f"node {i} {float(x)!r} {float(y)!r}")
        return "\n".join(lines) + "\n"

    def write_dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.format_dump())


def build_grid(config: GridConfig, phi: LevelSetFunction) -> QuadtreeGrid:
    """
    Build a grid by top-down refinement against a level-set function.

    Starting from the macromesh, every cell satisfying the refinement
    criterion is subdivided until l_max is reached.

    Args:
        config: Grid settings
        phi: Vectorized level-set function mapping (n, 2) points to n values

    Returns:
        QuadtreeGrid: The refined grid

    Raises:
        ValueError: If phi returns non-finite values at a sampled vertex

    Examples:
        >>> cfg = GridConfig((-1.0, -1.0), (1.0, 1.0), (2, 2), l_max=6)
        >>> grid = build_grid(cfg, lambda p: np.hypot(p[:, 0], p[:, 1] - 0.75) - 0.15)
        >>> grid.h_min
        0.015625
    """
    nx, ny = config.macromesh
    scale = 2**config.l_max
    gx, gy = np.meshgrid(np.arange(nx) * scale, np.arange(ny) * scale, indexing="ij")
    cur_ix = gx.ravel().astype(np.int64)
    cur_iy = gy.ravel().astype(np.int64)
    out_ix: List[np.ndarray] = []
    out_iy: List[np.ndarray] = []
    out_level: List[np.ndarray] = []
    origin = np.asarray(config.domain_min, dtype=np.float64)
    h = config.h_min

    for level in range(config.l_max + 1):
        if cur_ix.size == 0:
            break
        if level == config.l_max:
            out_ix.append(cur_ix)
            out_iy.append(cur_iy)
            out_level.append(np.full(cur_ix.size, level))
            break
        size = 2 ** (config.l_max - level)
        cx = np.stack([cur_ix, cur_ix, cur_ix + size, cur_ix + size], axis=1)
        cy = np.stack([cur_iy, cur_iy + size, cur_iy, cur_iy + size], axis=1)
        points = origin + np.stack([cx.ravel(), cy.ravel()], axis=1) * h
        values = np.asarray(phi(points), dtype=np.float64).reshape(-1, 4)
        bad = int(np.count_nonzero(~np.isfinite(values)))
        if bad:
            raise ValueError(f"level-set function is non-finite at {bad} sampled vertices")
        split = refinement_mask(values, np.full(cur_ix.size, level), config)
        out_ix.append(cur_ix[~split])
        out_iy.append(cur_iy[~split])
        out_level.append(np.full(int(np.count_nonzero(~split)), level))
        half = size // 2
        six, siy = cur_ix[split], cur_iy[split]
        cur_ix = np.concatenate([six, six, six + half, six + half])
        cur_iy = np.concatenate([siy, siy + half, siy, siy + half])

    grid = QuadtreeGrid(
        config, np.concatenate(out_ix), np.concatenate(out_iy), np.concatenate(out_level)
    )
    logger.debug(
        "built grid: %d leaves, %d nodes, l_max=%d", grid.n_leaves, grid.n_nodes, config.l_max
    )
    return grid
