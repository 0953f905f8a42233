"""Deterministic point-mass manipulation environments.

Desk-scale analogs of obstacle manipulation tasks: an agent point moves
kinematically inside a workspace, blocked by box obstacles (positions project
onto the contact face), and manipulates a single object either by carrying it
(grip analog) or by contact pushes.  The goal-space projection of a state is
the object position.  Rewards are sparse: 0 on success (object within
``eps_goal`` of the goal), -1 otherwise.

Everything is driven by :class:`EnvConfig`; the four shipped task configs
live in ``hindsight_atlas/configs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import AccessibleSpace, Bounds3, Cuboid, segment_crosses_interior

# how far blocked positions stand off an obstacle face, so that achieved
# points stay strictly outside the (closed) obstacles
_STANDOFF = 1e-6


class EpisodeOver(RuntimeError):
    """step() was called after the episode already ended."""


@dataclass(slots=True)
class EnvState:
    agent_pos: tuple[float, float, float]
    object_pos: tuple[float, float, float]
    holding: bool
    step_count: int


@dataclass(slots=True)
class Action:
    """Continuous action: per-axis move in [-1, 1] (scaled by the config's
    action scale) and a grip channel (>0 grab, <0 release)."""

    move: tuple[float, float, float]
    grip: float = 0.0
    index: int | None = None  # discrete origin, kept for tabular learners


@dataclass(frozen=True)
class Region:
    """Axis-aligned uniform sampling region; low == high pins an axis."""

    low: tuple[float, float, float]
    high: tuple[float, float, float]

    def __post_init__(self):
        if any(l > h for l, h in zip(self.low, self.high)):
            raise ValueError(f"region with low > high: {self}")

    def sample(self, rng: np.random.Generator) -> tuple[float, float, float]:
        u = rng.random(3)
        # cast to builtin floats: np.float64 scalars poison the env hot path
        return tuple(float(l + du * (h - l)) for l, h, du in zip(self.low, self.high, u))

    def contains(self, p) -> bool:
        return all(l <= x <= h for l, x, h in zip(self.low, p, self.high))


@dataclass(frozen=True)
class GoalDistribution:
    """Target goal distribution: either uniform over a region or a discrete
    goal set (both appear in the shipped tasks)."""

    region: Region | None = None
    points: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if (self.region is None) == (len(self.points) == 0):
            raise ValueError("goal distribution needs exactly one of region/points")

    def sample(self, rng: np.random.Generator) -> tuple[float, float, float]:
        if self.region is not None:
            return self.region.sample(rng)
        return self.points[int(rng.integers(len(self.points)))]


@dataclass(frozen=True)
class EnvConfig:
    name: str
    workspace: Bounds3
    obstacles: tuple[Cuboid, ...]
    object_start: Region
    goals: GoalDistribution
    agent_start: Region | None = None       # defaults to the object start
    agent_low: tuple[float, float, float] | None = None
    agent_high: tuple[float, float, float] | None = None
    eps_goal: float = 0.05
    horizon: int = 100
    action_scale: float = 0.03
    grab_radius: float = 0.05
    contact_radius: float = 0.04
    grip_mode: str = "free"                 # "free" or "locked" (always holding)
    throw_boost: bool = False               # release carries one step of momentum
    graph_bounds: Bounds3 | None = None     # accessible space for the goal graph
    graph_n: tuple[int, int, int] = (9, 9, 9)

    def __post_init__(self):
        if self.grip_mode not in ("free", "locked"):
            raise ValueError(f"unknown grip_mode {self.grip_mode!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def space(self) -> AccessibleSpace:
        return AccessibleSpace(self.workspace, self.obstacles)

    def graph_space(self) -> AccessibleSpace:
        """Accessible space the goal graph is built on (may be a sub-box of
        the workspace, e.g. a thin slab for planar tasks)."""
        bounds = self.graph_bounds or self.workspace
        lo, hi = bounds.low, bounds.high
        kept = tuple(
            o for o in self.obstacles
            if all(o.low[i] <= hi[i] and o.high[i] >= lo[i] for i in range(3))
        )
        return AccessibleSpace(bounds, kept)


def abstraction_m(state: EnvState) -> tuple[float, float, float]:
    """State abstraction into goal space: the object position."""
    return state.object_pos


@dataclass(frozen=True)
class TaskPair:
    """An (initial state, goal) pair; the unit the goal generator matches."""

    s0: EnvState
    g: tuple[float, float, float]


def discrete_action_set(config: EnvConfig) -> tuple[Action, ...]:
    """Discrete action set for tabular learners: axis moves for every axis
    the agent can actually travel, grab/release when the grip is free, and a
    trailing no-op."""
    lo, hi = _agent_box(config)
    actions = []
    for axis in range(3):
        if hi[axis] - lo[axis] > 1e-9:
            for sign in (1.0, -1.0):
                move = [0.0, 0.0, 0.0]
                move[axis] = sign
                actions.append(Action(move=tuple(move), grip=0.0))
    if config.grip_mode == "free":
        actions.append(Action(move=(0.0, 0.0, 0.0), grip=1.0))
        actions.append(Action(move=(0.0, 0.0, 0.0), grip=-1.0))
    actions.append(Action(move=(0.0, 0.0, 0.0), grip=0.0))
    return tuple(Action(move=a.move, grip=a.grip, index=i) for i, a in enumerate(actions))


def _agent_box(config: EnvConfig):
    b = config.workspace
    lo = config.agent_low or (b.x_min, b.y_min, b.z_min)
    hi = config.agent_high or (b.x_max, b.y_max, b.z_max)
    return lo, hi


class PointMassEnv:
    """Gym-style episodic interface: reset() -> (state, goal), step(action)
    -> (state, reward, done).  All randomness comes from the generator handed
    to reset/sample_task."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self._space = config.space
        # plain-float obstacle boxes for the hot path
        self._boxes = tuple((o.low, o.high) for o in config.obstacles)
        self._agent_lo, self._agent_hi = _agent_box(config)
        b = config.workspace
        self._ws_lo = (b.x_min, b.y_min, b.z_min)
        self._ws_hi = (b.x_max, b.y_max, b.z_max)
        self._state: EnvState | None = None
        self._goal: tuple[float, float, float] | None = None
        self._done = True

    # -- task sampling ----------------------------------------------------

    def sample_task(self, rng: np.random.Generator) -> TaskPair:
        obj = self._sample_clear(self.config.object_start, rng)
        if self.config.grip_mode == "locked":
            agent, holding = obj, True
        else:
            start = self.config.agent_start or self.config.object_start
            agent, holding = self._sample_clear(start, rng), False
        state = EnvState(agent_pos=agent, object_pos=obj, holding=holding, step_count=0)
        for _ in range(100):
            g = self.config.goals.sample(rng)
            if not any(self._inside_box(g, box) for box in self._boxes):
                return TaskPair(s0=state, g=g)
        raise ValueError(f"could not sample an obstacle-free goal in env {self.config.name}")

    def _sample_clear(self, region: Region, rng) -> tuple[float, float, float]:
        for _ in range(100):
            p = region.sample(rng)
            if not any(self._inside_box(p, box) for box in self._boxes):
                return p
        raise ValueError(f"start region of env {self.config.name} is blocked by obstacles")

    @staticmethod
    def _inside_box(p, box) -> bool:
        lo, hi = box
        return (lo[0] <= p[0] <= hi[0] and lo[1] <= p[1] <= hi[1]
                and lo[2] <= p[2] <= hi[2])

    # -- episode control ---------------------------------------------------

    def reset(self, rng: np.random.Generator) -> tuple[EnvState, tuple[float, float, float]]:
        task = self.sample_task(rng)
        return self.begin(task.s0, task.g)

    def begin(self, s0: EnvState, goal) -> tuple[EnvState, tuple[float, float, float]]:
        """Start an episode from an explicit task (initial state, goal)."""
        self._state = replace(s0, step_count=0)
        self._goal = tuple(goal)
        self._done = False
        return self._state, self._goal

    @property
    def state(self) -> EnvState:
        return self._state

    def step(self, action: Action) -> tuple[EnvState, float, bool]:
        if self._done or self._state is None:
            raise EpisodeOver("episode is over; call reset()/begin() first")
        cfg = self.config
        s = self._state
        scale = cfg.action_scale
        mx = min(max(action.move[0], -1.0), 1.0) * scale
        my = min(max(action.move[1], -1.0), 1.0) * scale
        mz = min(max(action.move[2], -1.0), 1.0) * scale
        grip = min(max(action.grip, -1.0), 1.0)

        ax, ay, az = s.agent_pos
        nx = self._slide(s.agent_pos, 0, self._clampa(ax + mx, 0))
        moved = (nx, ay, az)
        ny = self._slide(moved, 1, self._clampa(ay + my, 1))
        moved = (nx, ny, az)
        nz = self._slide(moved, 2, self._clampa(az + mz, 2))
        agent = (nx, ny, nz)
        disp = (nx - ax, ny - ay, nz - az)

        holding = s.holding
        obj = s.object_pos
        if holding:
            obj = agent
        if cfg.grip_mode == "free":
            if grip > 0.0 and not holding:
                if (_dist(agent, obj) <= cfg.grab_radius
                        and not self._snap_blocked(obj, agent)):
                    holding = True
                    obj = agent
            elif grip < 0.0 and holding:
                holding = False
                if cfg.throw_boost:
                    obj = self._move_point(obj, disp)
        if not holding and not s.holding:
            obj = self._contact_push(agent, disp, obj)

        reward = 0.0 if _dist(obj, self._goal) <= cfg.eps_goal else -1.0
        steps = s.step_count + 1
        done = reward == 0.0 or steps >= cfg.horizon
        self._state = EnvState(agent_pos=agent, object_pos=obj, holding=holding,
                               step_count=steps)
        self._done = done
        return self._state, reward, done

    def success(self) -> bool:
        return (self._state is not None
                and _dist(self._state.object_pos, self._goal) <= self.config.eps_goal)

    # -- kinematics --------------------------------------------------------

    def _clampa(self, v: float, axis: int) -> float:
        return min(max(v, self._agent_lo[axis]), self._agent_hi[axis])

    def _clampw(self, v: float, axis: int) -> float:
        return min(max(v, self._ws_lo[axis]), self._ws_hi[axis])

    def _slide(self, pos, axis: int, target: float) -> float:
        """Move one coordinate toward ``target``, stopping at the first
        obstacle face on the way (the other two coordinates are ``pos``)."""
        x0 = pos[axis]
        x1 = target
        if x1 == x0:
            return x1
        b1, b2 = (axis + 1) % 3, (axis + 2) % 3
        for lo, hi in self._boxes:
            if not (lo[b1] <= pos[b1] <= hi[b1] and lo[b2] <= pos[b2] <= hi[b2]):
                continue
            if x1 > x0:
                if x0 < lo[axis] <= x1 or lo[axis] <= x0 <= hi[axis]:
                    x1 = max(x0, min(x1, lo[axis] - _STANDOFF))
            else:
                if x1 <= hi[axis] < x0 or lo[axis] <= x0 <= hi[axis]:
                    x1 = min(x0, max(x1, hi[axis] + _STANDOFF))
        return x1

    def _move_point(self, p, disp) -> tuple[float, float, float]:
        """Per-axis obstacle-aware displacement of a free point, clamped to
        the workspace."""
        x = self._slide(p, 0, self._clampw(p[0] + disp[0], 0))
        p = (x, p[1], p[2])
        y = self._slide(p, 1, self._clampw(p[1] + disp[1], 1))
        p = (x, y, p[2])
        z = self._slide(p, 2, self._clampw(p[2] + disp[2], 2))
        return (x, y, z)

    def _contact_push(self, agent, disp, obj) -> tuple[float, float, float]:
        d = _dist(agent, obj)
        r = self.config.contact_radius
        if d >= r:
            return obj
        if d > 1e-12:
            scale = (r - d) / d
            push = ((obj[0] - agent[0]) * scale,
                    (obj[1] - agent[1]) * scale,
                    (obj[2] - agent[2]) * scale)
        elif disp != (0.0, 0.0, 0.0):
            n = math.sqrt(disp[0] ** 2 + disp[1] ** 2 + disp[2] ** 2)
            push = (disp[0] * r / n, disp[1] * r / n, disp[2] * r / n)
        else:
            return obj
        return self._move_point(obj, push)

    def _snap_blocked(self, obj, agent) -> bool:
        """Grabbing snaps the object to the agent; refuse when that snap
        would drag the object through an obstacle (e.g. across a thin wall)."""
        return any(segment_crosses_interior(obj, agent, o) for o in self.config.obstacles)


def _dist(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)
