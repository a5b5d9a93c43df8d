"""Planar geometry and trajectory primitives shared by every other module.

Positions are in meters in scene coordinates, timestamps in seconds,
angles in radians.  The same vector type is reused for velocities (m/s)
and forces (m/s^2, unit pedestrian mass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

NORMALIZE_EPS = 1e-12


@dataclass(frozen=True)
class Vec2:
    """Immutable 2D vector."""

    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> "Vec2":
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __truediv__(self, s: float) -> "Vec2":
        return Vec2(self.x / s, self.y / s)

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        """z-component of the 3D cross product."""
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> "Vec2":
        n = self.norm()
        if n <= NORMALIZE_EPS:
            raise ValueError(f"cannot normalize near-zero vector ({self.x}, {self.y})")
        return Vec2(self.x / n, self.y / n)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def angle(self) -> float:
        """Orientation in (-pi, pi]; undefined direction maps to 0."""
        return math.atan2(self.y, self.x)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


ZERO = Vec2(0.0, 0.0)


@dataclass(frozen=True)
class TrajectoryFrame:
    """One observation of a pedestrian: frame index, timestamp, position."""

    frame_index: int
    timestamp: float
    position: Vec2


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered positions of a single pedestrian.

    Frame indices and timestamps must be strictly increasing; a continuous
    track carries exactly one pedestrian id.
    """

    pedestrian_id: int
    frames: tuple[TrajectoryFrame, ...]

    def __post_init__(self):
        if not self.frames:
            raise ValueError("trajectory must contain at least one frame")
        if not isinstance(self.frames, tuple):
            object.__setattr__(self, "frames", tuple(self.frames))
        for a, b in zip(self.frames, self.frames[1:]):
            if b.frame_index <= a.frame_index:
                raise ValueError(
                    f"frame indices not strictly increasing at {b.frame_index}"
                )
            if b.timestamp <= a.timestamp:
                raise ValueError(f"timestamps not strictly increasing at {b.timestamp}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def positions(self) -> list[Vec2]:
        return [f.position for f in self.frames]

    @property
    def timestamps(self) -> list[float]:
        return [f.timestamp for f in self.frames]


@dataclass(frozen=True)
class ObstacleSet:
    """Static scene geometry as line segments (walls).

    Zero-length segments act as point obstacles.
    """

    segments: tuple[tuple[Vec2, Vec2], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not isinstance(self.segments, tuple):
            object.__setattr__(self, "segments", tuple(self.segments))
        for a, b in self.segments:
            if not (a.is_finite() and b.is_finite()):
                raise ValueError("obstacle segment endpoints must be finite")

    def __len__(self) -> int:
        return len(self.segments)

    def __bool__(self) -> bool:
        return bool(self.segments)


def finite_difference_velocity(traj: Trajectory) -> list[Vec2]:
    """Per-frame velocity v_t = (x_{t+1} - x_t) / (t_{t+1} - t_t).

    The last entry duplicates the previous one so the result aligns with
    the frame list.  Raises on single-frame trajectories.
    """
    if len(traj) < 2:
        raise ValueError("insufficient frames: need at least 2 for velocities")
    vels = []
    for a, b in zip(traj.frames, traj.frames[1:]):
        dt = b.timestamp - a.timestamp
        vels.append((b.position - a.position) / dt)
    vels.append(vels[-1])
    return vels


def arc_length(traj: Trajectory) -> float:
    """Total path length: sum of consecutive displacements (0 for one frame)."""
    return sum(
        (b.position - a.position).norm()
        for a, b in zip(traj.frames, traj.frames[1:])
    )


def project_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2:
    """Closest point to p on segment a-b; degenerate segments act as points."""
    ab = b - a
    denom = ab.dot(ab)
    if denom <= NORMALIZE_EPS:
        return a
    t = (p - a).dot(ab) / denom
    t = min(1.0, max(0.0, t))
    return a + ab * t


def nearest_obstacle_point(p: Vec2, obs: ObstacleSet) -> tuple[Vec2, float]:
    """Closest point on any obstacle segment and its distance.

    Ties go to the lowest segment index.  Raises on an empty set.
    """
    if not obs:
        raise ValueError("no obstacles")
    best_point = None
    best_dist = math.inf
    for a, b in obs.segments:
        q = project_on_segment(p, a, b)
        d = (p - q).norm()
        if d < best_dist:
            best_dist = d
            best_point = q
    return best_point, best_dist
