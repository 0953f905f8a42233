"""Trajectory storage, hindsight relabeling, and minibatch sampling.

Episodes are stored whole (the goal generator searches over trajectories);
for optimization they are flattened into transition rows.  Storing an episode
immediately appends its hindsight-relabeled copies using the "future"
strategy: for every timestep, ``k_future`` goals are drawn uniformly from the
achieved points later in the same episode and the sparse reward is recomputed
against them.

Rewards follow the sparse convention r = 0 if ||m(s') - g|| <= eps_goal else
-1.  A sampling-weight hook exists for prioritized variants (e.g. energy
based); the shipped default is uniform.
"""

from __future__ import annotations

import math
import pickle
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .env import Action, EnvState

BUFFER_FORMAT_VERSION = 1


class EmptyBuffer(RuntimeError):
    """sample_minibatch() on a buffer with no transitions."""


@dataclass(slots=True)
class Transition:
    s_t: EnvState
    g: tuple[float, float, float]
    a_t: Action
    r_t: float
    s_next: EnvState
    done: bool


@dataclass
class Trajectory:
    """One episode: position arrays plus the actions that produced them.

    ``achieved[t]`` is the goal-space projection m(states[t]) — maintained by
    construction, since states are materialized from these arrays.
    """

    agent: np.ndarray          # (T+1, 3)
    achieved: np.ndarray       # (T+1, 3) object positions
    holding: np.ndarray        # (T+1,)
    actions: list[Action]      # length T
    goal: tuple[float, float, float]
    rewards: np.ndarray        # (T,)
    traj_id: int = -1
    vertex_ids: np.ndarray | None = field(default=None, repr=False)  # metric cache

    @property
    def length(self) -> int:
        return len(self.actions)

    def state(self, t: int) -> EnvState:
        return EnvState(agent_pos=tuple(self.agent[t].tolist()),
                        object_pos=tuple(self.achieved[t].tolist()),
                        holding=bool(self.holding[t]),
                        step_count=t)

    @property
    def s0(self) -> EnvState:
        return self.state(0)

    @property
    def states(self) -> list[EnvState]:
        return [self.state(t) for t in range(self.length + 1)]


_ROW = np.dtype([
    ("ag", "f8", 3), ("ob", "f8", 3), ("hold", "?"),
    ("goal", "f8", 3), ("aidx", "i4"), ("move", "f8", 3), ("grip", "f8"),
    ("r", "f8"), ("nag", "f8", 3), ("nob", "f8", 3), ("nhold", "?"), ("done", "?"),
])


def sparse_reward(achieved_next, goal, eps_goal: float) -> float:
    d = math.sqrt((achieved_next[0] - goal[0]) ** 2
                  + (achieved_next[1] - goal[1]) ** 2
                  + (achieved_next[2] - goal[2]) ** 2)
    return 0.0 if d <= eps_goal else -1.0


def her_relabel(traj: Trajectory, t: int, k_future: int,
                rng: np.random.Generator, eps_goal: float = 0.05) -> list[Transition]:
    """Future-strategy relabels of the transition at timestep ``t``.

    Draws ``k_future`` substitute goals from the achieved points at uniformly
    sampled future timesteps t' in (t, T], recomputing the sparse reward; a
    relabeled transition is terminal iff it succeeds under its new goal.
    """
    if not 0 <= t < traj.length:
        raise IndexError(f"t={t} outside trajectory of length {traj.length}")
    if k_future == 0:
        return []
    tprimes = rng.integers(t + 1, traj.length + 1, size=k_future)
    s_t, s_next = traj.state(t), traj.state(t + 1)
    out = []
    for tp in tprimes:
        g = tuple(traj.achieved[int(tp)].tolist())
        r = sparse_reward(s_next.object_pos, g, eps_goal)
        out.append(Transition(s_t=s_t, g=g, a_t=traj.actions[t], r_t=r,
                              s_next=s_next, done=r == 0.0))
    return out


def _episode_rows(traj: Trajectory, k_future: int, rng: np.random.Generator,
                  eps_goal: float) -> np.ndarray:
    """Original + relabeled transition rows for a whole episode, vectorized."""
    T = traj.length
    rows = np.zeros(T * (1 + k_future), dtype=_ROW)
    orig = rows[:T]
    orig["ag"] = traj.agent[:-1]
    orig["ob"] = traj.achieved[:-1]
    orig["hold"] = traj.holding[:-1]
    orig["goal"] = traj.goal
    orig["aidx"] = [a.index if a.index is not None else -1 for a in traj.actions]
    orig["move"] = [a.move for a in traj.actions]
    orig["grip"] = [a.grip for a in traj.actions]
    orig["r"] = traj.rewards
    orig["nag"] = traj.agent[1:]
    orig["nob"] = traj.achieved[1:]
    orig["nhold"] = traj.holding[1:]
    orig["done"][:] = False
    orig["done"][T - 1] = True

    if k_future:
        ts = np.arange(T)
        u = rng.random((T, k_future))
        tprime = ts[:, None] + 1 + np.floor(u * (T - ts)[:, None]).astype(np.int64)
        rel = rows[T:].reshape(T, k_future)
        rel["ag"] = orig["ag"][:, None]
        rel["ob"] = orig["ob"][:, None]
        rel["hold"] = orig["hold"][:, None]
        rel["aidx"] = orig["aidx"][:, None]
        rel["move"] = orig["move"][:, None]
        rel["grip"] = orig["grip"][:, None]
        rel["nag"] = orig["nag"][:, None]
        rel["nob"] = orig["nob"][:, None]
        rel["nhold"] = orig["nhold"][:, None]
        goals = traj.achieved[tprime]
        rel["goal"] = goals
        dist = np.linalg.norm(traj.achieved[1:][ts][:, None, :] - goals, axis=2)
        success = dist <= eps_goal
        rel["r"] = np.where(success, 0.0, -1.0)
        rel["done"] = success
    return rows


def _transition_from_row(row) -> Transition:
    s = EnvState(agent_pos=tuple(row["ag"].tolist()),
                 object_pos=tuple(row["ob"].tolist()),
                 holding=bool(row["hold"]), step_count=0)
    sn = EnvState(agent_pos=tuple(row["nag"].tolist()),
                  object_pos=tuple(row["nob"].tolist()),
                  holding=bool(row["nhold"]), step_count=1)
    aidx = int(row["aidx"])
    a = Action(move=tuple(row["move"].tolist()), grip=float(row["grip"]),
               index=aidx if aidx >= 0 else None)
    return Transition(s_t=s, g=tuple(row["goal"].tolist()), a_t=a,
                      r_t=float(row["r"]), s_next=sn, done=bool(row["done"]))


class ReplayBuffer:
    """FIFO ring of trajectories with a flattened transition view.

    ``capacity`` counts trajectories.  Minibatch sampling is uniform over all
    stored transitions (originals and relabels alike), with replacement, and
    optionally reweighted through ``priority_fn`` (rows -> weights); the
    shipped default keeps it uniform.
    """

    def __init__(self, capacity: int, k_future: int = 4, eps_goal: float = 0.05,
                 priority_fn=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.k_future = k_future
        self.eps_goal = eps_goal
        self.priority_fn = priority_fn
        self._episodes: deque[tuple[Trajectory, np.ndarray]] = deque()
        self._next_id = 0
        self._cumsum: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._episodes)

    @property
    def num_trajectories(self) -> int:
        return len(self._episodes)

    @property
    def num_transitions(self) -> int:
        return int(sum(len(rows) for _, rows in self._episodes))

    def store(self, traj: Trajectory, rng: np.random.Generator) -> int:
        """Store an episode plus its hindsight relabels; returns the id."""
        traj.traj_id = self._next_id
        self._next_id += 1
        rows = _episode_rows(traj, self.k_future, rng, self.eps_goal)
        self._episodes.append((traj, rows))
        while len(self._episodes) > self.capacity:
            self._episodes.popleft()
        self._cumsum = None
        return traj.traj_id

    def trajectories(self, last: int | None = None) -> list[Trajectory]:
        """Most recent ``last`` trajectories (all when None), oldest first."""
        trajs = [t for t, _ in self._episodes]
        return trajs if last is None else trajs[-last:]

    def _counts(self) -> np.ndarray:
        if self._cumsum is None:
            self._cumsum = np.cumsum([len(rows) for _, rows in self._episodes])
        return self._cumsum

    def sample_rows(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if not self._episodes:
            raise EmptyBuffer("cannot sample from an empty replay buffer")
        cum = self._counts()
        total = int(cum[-1])
        if self.priority_fn is None:
            flat = rng.integers(0, total, size=batch)
        else:
            weights = np.concatenate([self.priority_fn(rows) for _, rows in self._episodes])
            weights = weights / weights.sum()
            flat = rng.choice(total, size=batch, p=weights)
        eps_idx = np.searchsorted(cum, flat, side="right")
        out = np.empty(batch, dtype=_ROW)
        for n, (e, f) in enumerate(zip(eps_idx, flat)):
            start = 0 if e == 0 else cum[e - 1]
            out[n] = self._episodes[e][1][f - start]
        return out

    def sample_minibatch(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        return [_transition_from_row(r) for r in self.sample_rows(batch, rng)]

    # -- persistence --------------------------------------------------------

    def dump(self, path, extra: dict | None = None) -> None:
        """Write the buffer (and an optional extra payload such as RNG state)
        to ``path``."""
        payload = {
            "format_version": BUFFER_FORMAT_VERSION,
            "capacity": self.capacity,
            "k_future": self.k_future,
            "eps_goal": self.eps_goal,
            "next_id": self._next_id,
            "episodes": list(self._episodes),
            "extra": extra or {},
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)

    @classmethod
    def restore(cls, path) -> tuple["ReplayBuffer", dict]:
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload["format_version"] != BUFFER_FORMAT_VERSION:
            raise ValueError(f"unsupported buffer file version "
                             f"{payload['format_version']} in {path}")
        buf = cls(payload["capacity"], k_future=payload["k_future"],
                  eps_goal=payload["eps_goal"])
        buf._episodes = deque(payload["episodes"])
        buf._next_id = payload["next_id"]
        return buf, payload["extra"]
