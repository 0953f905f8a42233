"""Goal-conditioned learners.

The goal generator only needs the behavioral contract in
:class:`GoalConditionedLearner`: pick actions, report state values
V(s0 || g), and improve from minibatches.  The shipped reference learner is
a tabular Q-function over discretized (state, goal) cells with a discrete
action set; any off-policy learner honoring the protocol slots in.
"""

from __future__ import annotations

import math
import pickle
from typing import Protocol, runtime_checkable

import numpy as np

from .env import Action, EnvState
from .replay import Transition

CHECKPOINT_FORMAT_VERSION = 1


@runtime_checkable
class GoalConditionedLearner(Protocol):
    def act(self, s: EnvState, g, explore: bool = False) -> Action: ...

    def value(self, s0: EnvState, g) -> float: ...

    def update(self, minibatch: list[Transition]) -> float: ...


class DiscretizedQ:
    """Tabular Q-learning over discretized state/goal cells.

    Cells are ``round(coordinate / resolution)`` per axis over (agent pos,
    object pos, holding flag) for states and the three goal coordinates for
    goals.  Unseen entries read as 0, so fresh cells look optimistic and the
    greedy argmax walks untried actions; the *value* of a visited cell,
    including the bootstrap target, is the max over the actions actually
    tried there (a parallel seen-mask per row), since otherwise a single
    untried action would pin every cell's value at 0 and no multi-step cost
    could ever propagate.  Ties in the greedy argmax break toward the lowest
    action index.
    """

    def __init__(self, actions: tuple[Action, ...], resolution: float = 0.05,
                 gamma: float = 0.98, learning_rate: float = 0.1,
                 eps_explore: float = 0.2, noise_scale: float = 0.1,
                 seed: int = 0):
        if not actions:
            raise ValueError("need at least one action")
        self.actions = tuple(actions)
        self.resolution = resolution
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.eps_explore = eps_explore
        self.noise_scale = noise_scale
        self._inv = 1.0 / resolution
        self._n = len(self.actions)
        self._q: dict[tuple, list[float]] = {}
        self._rng = np.random.default_rng(seed)

    # -- discretization -----------------------------------------------------

    @staticmethod
    def _seen_max(row) -> float:
        """Value of a visited cell: max over the actions tried there.

        Untried actions keep their optimistic 0 for action selection, but do
        not clamp the cell's value estimate (a cell whose tried actions all
        look bad must be allowed to look bad)."""
        vals, mask = row
        best = None
        for i, v in enumerate(vals):
            if mask >> i & 1 and (best is None or v > best):
                best = v
        return 0.0 if best is None else best

    def _key(self, s: EnvState, g) -> tuple:
        inv = self._inv
        a, o = s.agent_pos, s.object_pos
        return (math.floor(a[0] * inv + 0.5), math.floor(a[1] * inv + 0.5),
                math.floor(a[2] * inv + 0.5), math.floor(o[0] * inv + 0.5),
                math.floor(o[1] * inv + 0.5), math.floor(o[2] * inv + 0.5),
                s.holding,
                math.floor(g[0] * inv + 0.5), math.floor(g[1] * inv + 0.5),
                math.floor(g[2] * inv + 0.5))

    @property
    def table_size(self) -> int:
        return len(self._q)

    # -- behavioral contract ------------------------------------------------

    def act(self, s: EnvState, g, explore: bool = False) -> Action:
        row = self._q.get(self._key(s, g))
        if row is None:
            vals = None
            idx = 0
        else:
            vals = row[0]
            idx = max(range(self._n), key=vals.__getitem__)
        if not explore:
            return self.actions[idx]
        rng = self._rng
        if rng.random() < self.eps_explore:
            idx = int(rng.integers(self._n))
        elif vals is None:
            # all actions tie at the optimistic default: spread, don't bias
            idx = int(rng.integers(self._n))
        else:
            best = vals[idx]
            ties = [i for i in range(self._n) if vals[i] == best]
            if len(ties) > 1:
                idx = ties[int(rng.integers(len(ties)))]
        base = self.actions[idx]
        ns = self.noise_scale
        jx, jy, jz = rng.uniform(-ns, ns, 3)
        move = (min(max(base.move[0] + float(jx), -1.0), 1.0),
                min(max(base.move[1] + float(jy), -1.0), 1.0),
                min(max(base.move[2] + float(jz), -1.0), 1.0))
        return Action(move=move, grip=base.grip, index=idx)

    def value(self, s0: EnvState, g) -> float:
        row = self._q.get(self._key(s0, g))
        return 0.0 if row is None else self._seen_max(row)

    def values_for_goals(self, s0: EnvState, goals: np.ndarray) -> np.ndarray:
        """V(s0 || g) for every row of ``goals``; the vector the goal
        generator consumes per trajectory."""
        inv = self._inv
        a, o = s0.agent_pos, s0.object_pos
        prefix = (math.floor(a[0] * inv + 0.5), math.floor(a[1] * inv + 0.5),
                  math.floor(a[2] * inv + 0.5), math.floor(o[0] * inv + 0.5),
                  math.floor(o[1] * inv + 0.5), math.floor(o[2] * inv + 0.5),
                  s0.holding)
        get = self._q.get
        seen_max = self._seen_max
        out = np.empty(len(goals))
        for n, (gx, gy, gz) in enumerate(goals.tolist()):
            row = get(prefix + (math.floor(gx * inv + 0.5),
                                math.floor(gy * inv + 0.5),
                                math.floor(gz * inv + 0.5)))
            out[n] = 0.0 if row is None else seen_max(row)
        return out

    def update(self, minibatch: list[Transition]) -> float:
        """One TD(0) backup per transition; returns the mean |TD error|."""
        if not minibatch:
            raise ValueError("minibatch must be non-empty")
        q = self._q
        eta, gamma, n = self.learning_rate, self.gamma, self._n
        total = 0.0
        for tr in minibatch:
            key = self._key(tr.s_t, tr.g)
            row = q.get(key)
            if row is None:
                row = [[0.0] * n, 0]
                q[key] = row
            if tr.done:
                target = tr.r_t
            else:
                nrow = q.get(self._key(tr.s_next, tr.g))
                target = tr.r_t + gamma * (self._seen_max(nrow) if nrow is not None else 0.0)
            aidx = tr.a_t.index
            if aidx is None:
                aidx = self._nearest_action(tr.a_t)
            td = target - row[0][aidx]
            row[0][aidx] += eta * td
            row[1] |= 1 << aidx
            total += abs(td)
        return total / len(minibatch)

    def update_rows(self, rows) -> float:
        """Same TD(0) backup as :meth:`update`, reading the replay buffer's
        packed row format directly (the trainer's hot path)."""
        q = self._q
        eta, gamma, n = self.learning_rate, self.gamma, self._n
        inv = self._inv
        floor = math.floor
        total = 0.0
        cols = (rows["ag"].tolist(), rows["ob"].tolist(), rows["hold"].tolist(),
                rows["goal"].tolist(), rows["aidx"].tolist(), rows["r"].tolist(),
                rows["nag"].tolist(), rows["nob"].tolist(), rows["nhold"].tolist(),
                rows["done"].tolist())
        seen_max = self._seen_max
        for ag, ob, hold, goal, aidx, r, nag, nob, nhold, done in zip(*cols):
            gkey = (floor(goal[0] * inv + 0.5), floor(goal[1] * inv + 0.5),
                    floor(goal[2] * inv + 0.5))
            key = (floor(ag[0] * inv + 0.5), floor(ag[1] * inv + 0.5),
                   floor(ag[2] * inv + 0.5), floor(ob[0] * inv + 0.5),
                   floor(ob[1] * inv + 0.5), floor(ob[2] * inv + 0.5),
                   hold) + gkey
            row = q.get(key)
            if row is None:
                row = [[0.0] * n, 0]
                q[key] = row
            if done:
                target = r
            else:
                nkey = (floor(nag[0] * inv + 0.5), floor(nag[1] * inv + 0.5),
                        floor(nag[2] * inv + 0.5), floor(nob[0] * inv + 0.5),
                        floor(nob[1] * inv + 0.5), floor(nob[2] * inv + 0.5),
                        nhold) + gkey
                nrow = q.get(nkey)
                target = r + gamma * (seen_max(nrow) if nrow is not None else 0.0)
            vals = row[0]
            td = target - vals[aidx]
            vals[aidx] += eta * td
            row[1] |= 1 << aidx
            total += abs(td)
        return total / len(rows)

    def _nearest_action(self, a: Action) -> int:
        def gap(i):
            b = self.actions[i]
            return (sum((x - y) ** 2 for x, y in zip(a.move, b.move))
                    + (a.grip - b.grip) ** 2)
        return min(range(self._n), key=gap)

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "actions": [(a.move, a.grip) for a in self.actions],
            "resolution": self.resolution,
            "gamma": self.gamma,
            "learning_rate": self.learning_rate,
            "eps_explore": self.eps_explore,
            "noise_scale": self.noise_scale,
            "q": self._q,
            "rng_state": self._rng.bit_generator.state,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)

    @classmethod
    def load(cls, path) -> "DiscretizedQ":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{payload['format_version']} in {path}")
        actions = tuple(Action(move=tuple(m), grip=g, index=i)
                        for i, (m, g) in enumerate(payload["actions"]))
        learner = cls(actions, resolution=payload["resolution"],
                      gamma=payload["gamma"], learning_rate=payload["learning_rate"],
                      eps_explore=payload["eps_explore"],
                      noise_scale=payload["noise_scale"])
        learner._q = payload["q"]
        learner._rng.bit_generator.state = payload["rng_state"]
        return learner
