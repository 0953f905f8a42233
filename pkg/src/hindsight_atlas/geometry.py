"""Axis-aligned geometric primitives for goal spaces with box obstacles.

Conventions used throughout the package:

* bounding boxes are inclusive (a goal exactly on the box surface is
  accessible),
* obstacles are closed sets (a goal exactly on an obstacle face counts as
  blocked), so no goal is ever generated on an obstacle face.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


@dataclass(frozen=True)
class Bounds3:
    """Axis-aligned bounding box, in meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.z_min < self.z_max):
            raise ValueError(f"degenerate bounds: {self}")

    @property
    def low(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def high(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    def contains_point(self, p) -> bool:
        x, y, z = p
        return (self.x_min <= x <= self.x_max
                and self.y_min <= y <= self.y_max
                and self.z_min <= z <= self.z_max)


@dataclass(frozen=True)
class Cuboid:
    """Axis-aligned box obstacle given by center and half extents (meters)."""

    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        if len(self.center) != 3 or len(self.half_extents) != 3:
            raise ValueError("center and half_extents must be 3-vectors")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "half_extents", tuple(float(h) for h in self.half_extents))
        if any(h <= 0 for h in self.half_extents):
            raise ValueError(f"half_extents must be positive: {self.half_extents}")

    @property
    def edge_lengths(self) -> tuple[float, float, float]:
        hx, hy, hz = self.half_extents
        return (2.0 * hx, 2.0 * hy, 2.0 * hz)

    @property
    def low(self) -> tuple[float, float, float]:
        return tuple(c - h for c, h in zip(self.center, self.half_extents))

    @property
    def high(self) -> tuple[float, float, float]:
        return tuple(c + h for c, h in zip(self.center, self.half_extents))

    def contains_point(self, p) -> bool:
        """Closed membership: faces belong to the obstacle."""
        return all(abs(p[i] - self.center[i]) <= self.half_extents[i] for i in range(3))

    def contains_point_strict(self, p) -> bool:
        """Open membership: faces do not belong to the interior."""
        return all(abs(p[i] - self.center[i]) < self.half_extents[i] for i in range(3))


@dataclass(frozen=True)
class AccessibleSpace:
    """A bounded goal space minus a set of closed box obstacles."""

    bounds: Bounds3
    obstacles: tuple[Cuboid, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for i, obs in enumerate(self.obstacles):
            if not _boxes_overlap(obs, self.bounds):
                raise ValueError(
                    f"obstacle {i} lies entirely outside the bounding box: {obs}")

    def contains(self, g) -> bool:
        return contains(self, g)

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership for an (n, 3) array of goals."""
        pts = np.asarray(points, dtype=float)
        lo, hi = self.bounds.low, self.bounds.high
        ok = np.all((pts >= lo) & (pts <= hi), axis=-1)
        for obs in self.obstacles:
            c = np.asarray(obs.center)
            h = np.asarray(obs.half_extents)
            inside = np.all(np.abs(pts - c) <= h, axis=-1)
            ok &= ~inside
        return ok


def _boxes_overlap(obs: Cuboid, bounds: Bounds3) -> bool:
    lo, hi = obs.low, obs.high
    blo = (bounds.x_min, bounds.y_min, bounds.z_min)
    bhi = (bounds.x_max, bounds.y_max, bounds.z_max)
    return all(lo[i] <= bhi[i] and hi[i] >= blo[i] for i in range(3))


def contains(space: AccessibleSpace, g) -> bool:
    """True iff ``g`` lies inside the bounds (inclusive) and strictly outside
    every obstacle cuboid."""
    if not space.bounds.contains_point(g):
        return False
    return not any(obs.contains_point(g) for obs in space.obstacles)


def _clip_segment_to_slabs(p1, p2, cuboid: Cuboid, strict: bool):
    """Slab-clip the parametrized segment p(t) = p1 + t*(p2-p1), t in [0, 1].

    Returns (t_enter, t_exit) or None when a degenerate axis already rules
    the segment out.  ``strict`` controls whether a point sitting exactly on
    a slab boundary counts as inside (closed cuboid) or not (interior).
    """
    lo, hi = cuboid.low, cuboid.high
    t_enter, t_exit = 0.0, 1.0
    for i in range(3):
        d = p2[i] - p1[i]
        if abs(d) < _EPS:
            if strict:
                if not (lo[i] < p1[i] < hi[i]):
                    return None
            else:
                if not (lo[i] <= p1[i] <= hi[i]):
                    return None
            continue
        t0 = (lo[i] - p1[i]) / d
        t1 = (hi[i] - p1[i]) / d
        if t0 > t1:
            t0, t1 = t1, t0
        t_enter = max(t_enter, t0)
        t_exit = min(t_exit, t1)
        if t_enter > t_exit:
            return None
    return t_enter, t_exit


def segment_intersects_cuboid(p1, p2, c: Cuboid) -> bool:
    """True iff the open segment (p1, p2) meets the closed cuboid ``c``.

    Degenerate segments (p1 == p2) reduce to point membership.
    """
    if tuple(p1) == tuple(p2):
        return c.contains_point(p1)
    clipped = _clip_segment_to_slabs(p1, p2, c, strict=False)
    if clipped is None:
        return False
    t_enter, t_exit = clipped
    # open segment: single-point contact at an endpoint does not count
    return t_enter <= t_exit and t_enter < 1.0 and t_exit > 0.0


def segment_crosses_interior(p1, p2, c: Cuboid) -> bool:
    """True iff the open segment passes through the open interior of ``c``.

    Unlike :func:`segment_intersects_cuboid` a tangential graze along a face,
    edge, or corner does not count.
    """
    if tuple(p1) == tuple(p2):
        return c.contains_point_strict(p1)
    clipped = _clip_segment_to_slabs(p1, p2, c, strict=True)
    if clipped is None:
        return False
    t_enter, t_exit = clipped
    return t_enter < t_exit and t_enter < 1.0 and t_exit > 0.0
