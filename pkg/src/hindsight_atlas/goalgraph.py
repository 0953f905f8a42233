"""Orthorhombic-lattice graph over the accessible goal space.

The graph discretizes a bounded goal space into an n_x * n_y * n_z lattice,
drops every lattice point blocked by an obstacle, and connects each surviving
vertex to its (up to 26) surviving lattice neighbors with euclidean edge
weights.  A per-obstacle density criterion (lattice spacing strictly smaller
than every obstacle edge length) guarantees that no edge can pass through an
obstacle; violating it is a hard error because the shortest-distance metric
built on top of the graph would silently tunnel through walls otherwise.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .geometry import AccessibleSpace, Bounds3, Cuboid

GRAPH_FORMAT_VERSION = 1

# the 26-neighborhood, one representative per undirected direction
_HALF_OFFSETS = [
    (di, dj, dk)
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) > (0, 0, 0)
]


class DensityViolation(ValueError):
    """Lattice spacing is not strictly below some obstacle edge length."""

    def __init__(self, obstacle_index: int, deltas, edges):
        self.obstacle_index = obstacle_index
        self.deltas = tuple(deltas)
        self.edges = tuple(edges)
        super().__init__(
            f"graph density criterion violated for obstacle {obstacle_index}: "
            f"lattice spacing {self.deltas} must be strictly below the obstacle "
            f"edge lengths {self.edges} in every axis")


class EmptyGraph(ValueError):
    """No lattice vertex survived obstacle exclusion."""


@dataclass(frozen=True)
class LatticeSpec:
    """Vertex counts per axis and the implied lattice spacings (Eq.-style
    delta = span / (n - 1))."""

    n_x: int
    n_y: int
    n_z: int
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        if min(self.n_x, self.n_y, self.n_z) < 2:
            raise ValueError(f"need at least 2 vertices per axis, got "
                             f"({self.n_x}, {self.n_y}, {self.n_z})")

    @classmethod
    def from_bounds(cls, bounds: Bounds3, n_x: int, n_y: int, n_z: int) -> "LatticeSpec":
        if min(n_x, n_y, n_z) < 2:
            raise ValueError(f"need at least 2 vertices per axis, got ({n_x}, {n_y}, {n_z})")
        return cls(
            n_x=n_x, n_y=n_y, n_z=n_z,
            dx=(bounds.x_max - bounds.x_min) / (n_x - 1),
            dy=(bounds.y_max - bounds.y_min) / (n_y - 1),
            dz=(bounds.z_max - bounds.z_min) / (n_z - 1),
        )

    @property
    def deltas(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    @property
    def n_candidates(self) -> int:
        return self.n_x * self.n_y * self.n_z


def check_density(space: AccessibleSpace, spec: LatticeSpec) -> bool:
    """Density criterion: for every obstacle, each lattice spacing is strictly
    smaller than the obstacle's edge length along the same axis."""
    return all(
        spec.dx < a and spec.dy < b and spec.dz < c
        for (a, b, c) in (obs.edge_lengths for obs in space.obstacles)
    )


class GoalGraph:
    """Immutable lattice graph; construction is done via :func:`build_graph`.

    Vertices are stored in row-major (i, j, k) order; ``index_grid`` maps a
    lattice coordinate to a vertex id, with -1 marking excluded points.
    Adjacency is CSR (``indptr``, ``indices``, ``weights``) and symmetric.
    """

    def __init__(self, spec: LatticeSpec, space: AccessibleSpace,
                 vertices: np.ndarray, index_grid: np.ndarray,
                 indptr: np.ndarray, indices: np.ndarray, weights: np.ndarray):
        self.spec = spec
        self.space = space
        self.vertices = vertices
        self.index_grid = index_grid
        self.indptr = indptr
        self.indices = indices
        self.weights = weights
        self.lattice_coords = np.argwhere(index_grid >= 0)
        for arr in (self.vertices, self.index_grid, self.indptr,
                    self.indices, self.weights, self.lattice_coords):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor ids and edge weights of vertex ``v``."""
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def edge_list(self) -> np.ndarray:
        """(m, 2) array of undirected edges, each listed once with u < v."""
        src = np.repeat(np.arange(self.num_vertices), np.diff(self.indptr))
        mask = src < self.indices
        return np.stack([src[mask], self.indices[mask]], axis=1)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.vertices, self.index_grid, self.indptr, self.indices, self.weights):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _candidate_lattice(bounds: Bounds3, spec: LatticeSpec) -> np.ndarray:
    xs = np.linspace(bounds.x_min, bounds.x_max, spec.n_x)
    ys = np.linspace(bounds.y_min, bounds.y_max, spec.n_y)
    zs = np.linspace(bounds.z_min, bounds.z_max, spec.n_z)
    grid = np.meshgrid(xs, ys, zs, indexing="ij")
    return np.stack([g.reshape(-1) for g in grid], axis=1)


def build_graph(space: AccessibleSpace, n_x: int, n_y: int, n_z: int) -> GoalGraph:
    """Build the lattice graph for ``space``.

    Raises :class:`DensityViolation` when the density criterion fails and
    :class:`EmptyGraph` when every candidate vertex is blocked.
    """
    spec = LatticeSpec.from_bounds(space.bounds, n_x, n_y, n_z)
    for idx, obs in enumerate(space.obstacles):
        a, b, c = obs.edge_lengths
        if not (spec.dx < a and spec.dy < b and spec.dz < c):
            raise DensityViolation(idx, spec.deltas, (a, b, c))

    candidates = _candidate_lattice(space.bounds, spec)
    keep = space.contains_many(candidates)
    if not keep.any():
        raise EmptyGraph("every lattice vertex lies inside an obstacle")

    index_grid = np.full(spec.n_candidates, -1, dtype=np.int64)
    index_grid[keep] = np.arange(int(keep.sum()))
    index_grid = index_grid.reshape(spec.n_x, spec.n_y, spec.n_z)
    vertices = candidates[keep]

    # adjacency via shifted views of the id grid, one pass per direction
    pairs = []
    for di, dj, dk in _HALF_OFFSETS:
        a = index_grid[max(di, 0) or None:min(di, 0) or None,
                       max(dj, 0) or None:min(dj, 0) or None,
                       max(dk, 0) or None:min(dk, 0) or None]
        b = index_grid[max(-di, 0) or None:min(-di, 0) or None,
                       max(-dj, 0) or None:min(-dj, 0) or None,
                       max(-dk, 0) or None:min(-dk, 0) or None]
        ok = (a >= 0) & (b >= 0)
        if ok.any():
            pairs.append(np.stack([a[ok], b[ok]], axis=1))

    n = len(vertices)
    if pairs:
        und = np.concatenate(pairs)
        src = np.concatenate([und[:, 0], und[:, 1]])
        dst = np.concatenate([und[:, 1], und[:, 0]])
        w = np.linalg.norm(vertices[src] - vertices[dst], axis=1)
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        indices = dst
    else:
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices = np.empty(0, dtype=np.int64)
        w = np.empty(0, dtype=float)

    return GoalGraph(spec, space, vertices, index_grid, indptr, indices, w)


def save_graph(graph: GoalGraph, path) -> None:
    obstacles = np.array(
        [[*o.center, *o.half_extents] for o in graph.space.obstacles], dtype=float
    ).reshape(-1, 6)
    b = graph.space.bounds
    np.savez_compressed(
        path,
        format_version=np.int64(GRAPH_FORMAT_VERSION),
        bounds=np.array([b.x_min, b.x_max, b.y_min, b.y_max, b.z_min, b.z_max]),
        obstacles=obstacles,
        n_per_axis=np.array([graph.spec.n_x, graph.spec.n_y, graph.spec.n_z], dtype=np.int64),
        vertices=graph.vertices,
        index_grid=graph.index_grid,
        indptr=graph.indptr,
        indices=graph.indices,
        weights=graph.weights,
    )


def load_graph(path) -> GoalGraph:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != GRAPH_FORMAT_VERSION:
            raise ValueError(f"unsupported graph file version {version} in {path}")
        b = data["bounds"]
        bounds = Bounds3(*b.tolist())
        obstacles = tuple(
            Cuboid(center=tuple(row[:3]), half_extents=tuple(row[3:]))
            for row in data["obstacles"]
        )
        space = AccessibleSpace(bounds, obstacles)
        n_x, n_y, n_z = (int(v) for v in data["n_per_axis"])
        spec = LatticeSpec.from_bounds(bounds, n_x, n_y, n_z)
        return GoalGraph(spec, space, data["vertices"], data["index_grid"],
                         data["indptr"], data["indices"], data["weights"])
