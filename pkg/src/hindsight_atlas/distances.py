"""Precomputed shortest distances on the goal graph and the induced metric.

``compute_apsp`` runs one Dijkstra per source vertex (via scipy's csgraph,
which is exact and fast) and stores the full n x n table.  Continuous goals
are mapped to vertices by rounding each coordinate to the nearest lattice
index (half rounds up); if the rounded lattice point was excluded by an
obstacle, the nearest retained vertex by euclidean distance is used instead.
The metric over continuous goals is then

    d(g1, g2) = table[v(g1), v(g2)]   if both goals are accessible,
    d(g1, g2) = inf                   otherwise.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .goalgraph import GoalGraph

TABLE_FORMAT_VERSION = 1

# dense n x n float64 tables get unreasonable past this point
MAX_TABLE_VERTICES = 20_000


class OutsideAccessibleSpace(ValueError):
    """Goal passed to the nearest-vertex map is not in the accessible space."""


class GraphTooLarge(ValueError):
    """Vertex count exceeds the dense-table limit."""


def compute_apsp(graph: GoalGraph) -> "DistanceTable":
    """All-pairs shortest path distances over the graph edges.

    Disconnected pairs get ``inf``.  The result is symmetrized with an
    elementwise minimum so the metric invariants hold exactly.
    """
    n = graph.num_vertices
    if n > MAX_TABLE_VERTICES:
        raise GraphTooLarge(
            f"{n} vertices would need a {n}x{n} distance table; the dense "
            f"format is capped at {MAX_TABLE_VERTICES} vertices")
    adj = csr_matrix((graph.weights, graph.indices, graph.indptr), shape=(n, n))
    d_hat = _csgraph_dijkstra(adj, directed=True)
    d_hat = np.minimum(d_hat, d_hat.T)
    np.fill_diagonal(d_hat, 0.0)
    return DistanceTable(graph, d_hat)


class DistanceTable:
    """n x n shortest-distance matrix bound to the graph it was built from."""

    def __init__(self, graph: GoalGraph, d_hat: np.ndarray, graph_hash: str | None = None):
        self.graph = graph
        self.d_hat = d_hat
        self.graph_hash = graph_hash or graph.content_hash()
        self.query_count = 0  # instrumentation: how often the metric was used
        d_hat.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.d_hat)

    def distance(self, g1, g2) -> float:
        return graph_distance(self, g1, g2)

    def distances_from_goal(self, g, vertex_ids: np.ndarray) -> np.ndarray:
        """Metric distances from goal ``g`` to points given by their vertex
        ids (-1 marks an inaccessible point, yielding inf)."""
        self.query_count += 1
        out = np.full(len(vertex_ids), np.inf)
        if not self.graph.space.contains(g):
            return out
        src = nearest_vertex(self.graph, g)
        ok = vertex_ids >= 0
        out[ok] = self.d_hat[src, vertex_ids[ok]]
        return out


def _lattice_indices(graph: GoalGraph, g) -> tuple[int, int, int]:
    b = graph.space.bounds
    spec = graph.spec
    i = int(math.floor((g[0] - b.x_min) / spec.dx + 0.5))
    j = int(math.floor((g[1] - b.y_min) / spec.dy + 0.5))
    k = int(math.floor((g[2] - b.z_min) / spec.dz + 0.5))
    # clamp: float noise at the far box surface can overshoot by one ulp
    return (min(max(i, 0), spec.n_x - 1),
            min(max(j, 0), spec.n_y - 1),
            min(max(k, 0), spec.n_z - 1))


def nearest_vertex(graph: GoalGraph, g) -> int:
    """Map an accessible goal to its vertex id.

    Rounds each coordinate to the closest lattice index (ties round up).  If
    the rounded lattice point was excluded by an obstacle, falls back to the
    nearest retained vertex by euclidean distance (lowest id on ties).
    """
    if not graph.space.contains(g):
        raise OutsideAccessibleSpace(f"goal {tuple(g)} is not in the accessible space")
    i, j, k = _lattice_indices(graph, g)
    vid = int(graph.index_grid[i, j, k])
    if vid >= 0:
        return vid
    dist = np.linalg.norm(graph.vertices - np.asarray(g, dtype=float), axis=1)
    return int(np.argmin(dist))


def vertex_ids_for_goals(graph: GoalGraph, goals: np.ndarray) -> np.ndarray:
    """Vectorized nearest-vertex map for an (n, 3) array of goals.

    Returns -1 for goals outside the accessible space.
    """
    goals = np.asarray(goals, dtype=float)
    b = graph.space.bounds
    spec = graph.spec
    ids = np.full(len(goals), -1, dtype=np.int64)
    ok = graph.space.contains_many(goals)
    if not ok.any():
        return ids
    rel = (goals[ok] - b.low) / np.array([spec.dx, spec.dy, spec.dz])
    idx = np.floor(rel + 0.5).astype(np.int64)
    idx = np.clip(idx, 0, np.array([spec.n_x, spec.n_y, spec.n_z]) - 1)
    vids = graph.index_grid[idx[:, 0], idx[:, 1], idx[:, 2]]
    missing = vids < 0
    if missing.any():
        # rounded lattice point excluded: nearest retained vertex wins
        sub = goals[ok][missing]
        d = np.linalg.norm(graph.vertices[None, :, :] - sub[:, None, :], axis=2)
        vids[missing] = np.argmin(d, axis=1)
    ids[ok] = vids
    return ids


def graph_distance(table: DistanceTable, g1, g2) -> float:
    """Metric over continuous goals; ``inf`` when either goal is blocked or
    out of bounds (that is a value, not an error)."""
    table.query_count += 1
    space = table.graph.space
    if not (space.contains(g1) and space.contains(g2)):
        return math.inf
    return float(table.d_hat[nearest_vertex(table.graph, g1),
                             nearest_vertex(table.graph, g2)])


def shortest_path_vertices(graph: GoalGraph, g1, g2) -> list[int]:
    """Vertex sequence of a shortest path between the goals' vertices.

    Empty when the goals are disconnected.  Intended for inspection and the
    CLI query command; training uses the precomputed table only.
    """
    src = nearest_vertex(graph, g1)
    dst = nearest_vertex(graph, g2)
    n = graph.num_vertices
    adj = csr_matrix((graph.weights, graph.indices, graph.indptr), shape=(n, n))
    _, pred = _csgraph_dijkstra(adj, directed=True, indices=src, return_predecessors=True)
    if src != dst and pred[dst] < 0:
        return []
    path = [dst]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def save_table(table: DistanceTable, path) -> None:
    np.savez_compressed(
        path,
        format_version=np.int64(TABLE_FORMAT_VERSION),
        graph_hash=np.bytes_(table.graph_hash.encode()),
        d_hat=table.d_hat,
    )


def load_table(path, graph: GoalGraph) -> DistanceTable:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != TABLE_FORMAT_VERSION:
            raise ValueError(f"unsupported table file version {version} in {path}")
        stored_hash = bytes(data["graph_hash"]).decode()
        if stored_hash != graph.content_hash():
            raise ValueError(
                f"distance table {path} was built for a different graph "
                f"(hash {stored_hash[:12]}..., expected {graph.content_hash()[:12]}...)")
        return DistanceTable(graph, data["d_hat"], graph_hash=stored_hash)
