"""Hindsight goal generation.

Each training iteration matches K sampled target tasks against a pool of
recent buffer trajectories.  The cost of serving target (s0_hat, g_hat) with
trajectory tau is

    w = c * ||m(s0_hat) - m(s0)||  +  min_t ( d(g_hat, m(s_t)) - V(s0 || m(s_t)) / L )

where d is either the graph-based metric (obstacle aware) or the plain
euclidean norm.  An exact minimum-cost bipartite matching picks K distinct
trajectories minimizing the summed cost; the hindsight goal of each pair is
the achieved point at the per-pair minimizing timestep.  Once enough
hindsight goals land next to their targets (the delta_stop fraction), the
curriculum hands exploration off to the plain target distribution.

Distances of inaccessible points are infinite; inside the matching solver
they are replaced by a large finite sentinel so a perfect matching always
exists, and a matching that actually uses a sentinel edge is reported as
infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .distances import DistanceTable, graph_distance, vertex_ids_for_goals
from .env import TaskPair, abstraction_m
from .replay import ReplayBuffer, Trajectory

INFEASIBLE_SENTINEL = 1e6  # meters; stands in for inf inside the solver


class AllInfinite(ValueError):
    """Every timestep of the trajectory maps outside the accessible space."""


class InsufficientTrajectories(ValueError):
    """Fewer distinct trajectories available than targets to match."""


class Infeasible(RuntimeError):
    """No finite-cost perfect matching exists."""


@dataclass(frozen=True)
class HggHyperParams:
    c: float = 3.0                 # initial-state weight
    lipschitz: float = 5.0         # the 1/L scaling of the value bias
    k_targets: int = 20            # K sampled target tasks per iteration
    episodes: int = 50             # M exploration episodes per iteration
    pool: int = 100                # matching pool: most recent trajectories
    delta_stop: float = 0.9        # hand-off fraction
    eps_close: float = 0.05        # closeness threshold for the hand-off test
    metric_mode: str = "graph"     # "graph" or "euclidean"

    def __post_init__(self):
        if not 0.0 <= self.delta_stop <= 1.0:
            raise ValueError("delta_stop must lie in [0, 1]")
        if self.lipschitz <= 0:
            raise ValueError("lipschitz must be positive")
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if self.metric_mode not in ("graph", "euclidean"):
            raise ValueError(f"unknown metric_mode {self.metric_mode!r}")
        if self.k_targets < 1 or self.episodes < 1 or self.pool < 1:
            raise ValueError("k_targets, episodes, and pool must be positive")


@dataclass(frozen=True)
class MatchedPair:
    task: TaskPair
    traj_id: int
    t_star: int
    goal: tuple[float, float, float]   # hindsight goal m(s_{t*})
    cost: float


@dataclass(frozen=True)
class GoalSelection:
    matched: tuple[MatchedPair, ...]

    def __post_init__(self):
        ids = [p.traj_id for p in self.matched]
        if len(set(ids)) != len(ids):
            raise ValueError("matched trajectories must be distinct")


class EuclideanMetric:
    """Eq.-8-style baseline: straight-line distances, blind to obstacles."""

    name = "euclidean"

    def prepare(self, traj: Trajectory) -> None:
        pass

    def distances_to_goal(self, g, traj: Trajectory) -> np.ndarray:
        return np.linalg.norm(traj.achieved - np.asarray(g, dtype=float), axis=1)

    def pair_distance(self, g1, g2) -> float:
        return float(np.linalg.norm(np.asarray(g1, dtype=float) - np.asarray(g2)))


class GraphMetric:
    """Obstacle-aware metric backed by a precomputed distance table; caches
    the vertex ids of each trajectory's achieved points."""

    name = "graph"

    def __init__(self, table: DistanceTable):
        self.table = table

    def prepare(self, traj: Trajectory) -> None:
        if traj.vertex_ids is None:
            traj.vertex_ids = vertex_ids_for_goals(self.table.graph, traj.achieved)

    def distances_to_goal(self, g, traj: Trajectory) -> np.ndarray:
        self.prepare(traj)
        return self.table.distances_from_goal(g, traj.vertex_ids)

    def pair_distance(self, g1, g2) -> float:
        return graph_distance(self.table, g1, g2)


def make_metric(mode: str, table: DistanceTable | None = None):
    if mode == "euclidean":
        return EuclideanMetric()
    if mode == "graph":
        if table is None:
            raise ValueError("graph metric needs a distance table")
        return GraphMetric(table)
    raise ValueError(f"unknown metric mode {mode!r}")


def _cost_terms(task: TaskPair, traj: Trajectory, learner, hp: HggHyperParams,
                metric) -> tuple[np.ndarray, float]:
    dists = metric.distances_to_goal(task.g, traj)
    values = learner.values_for_goals(traj.s0, traj.achieved)
    start_gap = math.dist(abstraction_m(task.s0), tuple(traj.achieved[0]))
    return dists - values / hp.lipschitz, hp.c * start_gap


def trajectory_cost(task: TaskPair, traj: Trajectory, learner,
                    hp: HggHyperParams, metric) -> tuple[float, int]:
    """Matching cost of serving ``task`` with ``traj`` and the timestep that
    attains it."""
    if traj.length < 1:
        raise ValueError("trajectory must contain at least one transition")
    terms, start_term = _cost_terms(task, traj, learner, hp, metric)
    t_star = int(np.argmin(terms))
    best = terms[t_star]
    if math.isinf(best):
        raise AllInfinite("every achieved point of the trajectory lies outside "
                          "the accessible goal space")
    return float(start_term + best), t_star


def build_cost_matrix(targets: list[TaskPair], pool: list[Trajectory], learner,
                      hp: HggHyperParams, metric):
    """(K, P) matching costs plus per-entry minimizing timesteps.

    Entries are inf where the metric term is infinite at every timestep.
    """
    k, p = len(targets), len(pool)
    costs = np.empty((k, p))
    t_stars = np.empty((k, p), dtype=np.int64)
    values = []
    for traj in pool:
        metric.prepare(traj)
        values.append(learner.values_for_goals(traj.s0, traj.achieved) / hp.lipschitz)
    starts = np.array([traj.achieved[0] for traj in pool])
    target_m = np.array([abstraction_m(t.s0) for t in targets])
    start_terms = hp.c * np.linalg.norm(target_m[:, None, :] - starts[None, :, :], axis=2)
    for j, traj in enumerate(pool):
        for i, task in enumerate(targets):
            terms = metric.distances_to_goal(task.g, traj) - values[j]
            t = int(np.argmin(terms))
            t_stars[i, j] = t
            costs[i, j] = start_terms[i, j] + terms[t]
    return costs, t_stars


def solve_assignment(costs: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact minimum-cost assignment of rows to distinct columns.

    Returns the column chosen for each row and the total cost (using the
    true, possibly infinite entries).  Raises :class:`Infeasible` when the
    optimum needs an infinite edge.
    """
    finite = np.isfinite(costs)
    solver_costs = np.where(finite, costs, INFEASIBLE_SENTINEL)
    rows, cols = linear_sum_assignment(solver_costs)
    if not finite[rows, cols].all():
        raise Infeasible("no finite-cost perfect matching exists")
    return cols, float(costs[rows, cols].sum())


def select_trajectories(targets: list[TaskPair], buffer: ReplayBuffer, learner,
                        hp: HggHyperParams, metric) -> GoalSelection:
    """Match the K targets to K distinct recent trajectories minimizing the
    summed cost, and read the hindsight goal off each matched trajectory."""
    pool = buffer.trajectories(last=hp.pool)
    if len(pool) < len(targets):
        raise InsufficientTrajectories(
            f"need {len(targets)} distinct trajectories, buffer pool has {len(pool)}")
    costs, t_stars = build_cost_matrix(targets, pool, learner, hp, metric)
    cols, _ = solve_assignment(costs)
    matched = []
    for i, task in enumerate(targets):
        j = int(cols[i])
        traj = pool[j]
        t = int(t_stars[i, j])
        matched.append(MatchedPair(task=task, traj_id=traj.traj_id, t_star=t,
                                   goal=tuple(traj.achieved[t].tolist()),
                                   cost=float(costs[i, j])))
    return GoalSelection(matched=tuple(matched))


def stop_condition(selection: GoalSelection, targets: list[TaskPair],
                   hp: HggHyperParams) -> bool:
    """True once the fraction of hindsight goals within ``eps_close``
    (euclidean) of their matched targets reaches ``delta_stop``; the trainer
    then switches exploration to plain target goals for good."""
    if not selection.matched:
        return hp.delta_stop == 0.0
    close = sum(math.dist(p.goal, p.task.g) <= hp.eps_close for p in selection.matched)
    return close / len(selection.matched) >= hp.delta_stop


def intermediate_tasks(selection: GoalSelection, m: int,
                       rng: np.random.Generator) -> list[TaskPair]:
    """Expand the K matched pairs into M exploration tasks by uniform
    sampling with replacement, pairing each target's initial state with its
    matched hindsight goal."""
    picks = rng.integers(0, len(selection.matched), size=m)
    return [TaskPair(s0=selection.matched[int(i)].task.s0,
                     g=selection.matched[int(i)].goal) for i in picks]
