"""Trajectory quality filters and small-gap repair.

Five rules gate every trajectory: a minimum frame count, spatial
consistency across detection gaps (teleportation), a minimum arc length,
an instantaneous speed cap, and rejection of looped or stationary motion.
Feasible gaps are filled by linear interpolation before filtering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

from robosfm.geometry import Trajectory, TrajectoryFrame, arc_length

REASON_MIN_FRAMES = "min_frames"
REASON_TELEPORT = "teleport"
REASON_ARC_LENGTH = "arc_length"
REASON_SPEED = "speed"
REASON_LOOP = "loop"
REASON_STATIONARY = "stationary"

ALL_REASONS = (
    REASON_MIN_FRAMES,
    REASON_TELEPORT,
    REASON_ARC_LENGTH,
    REASON_SPEED,
    REASON_LOOP,
    REASON_STATIONARY,
)


@dataclass(frozen=True)
class FilterConfig:
    min_frames: int = 10
    min_arc_length: float = 3.5  # m
    max_speed: float = 2.7  # m/s
    max_gap_displacement: float = 1.0  # m, cap on interpolated jumps
    max_gap_frames: int = 5  # longest repairable run of missing frames
    loop_net_ratio: float = 0.25  # net displacement / arc length
    stationary_radius: float = 1.0  # m, all-points-within disc radius

    def __post_init__(self):
        for name in (
            "min_frames", "min_arc_length", "max_speed",
            "max_gap_displacement", "max_gap_frames",
            "loop_net_ratio", "stationary_radius",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Rejection:
    reason: str


@dataclass
class FilterReport:
    input_count: int = 0
    kept_count: int = 0
    rejections: dict[str, int] = field(
        default_factory=lambda: {r: 0 for r in ALL_REASONS}
    )
    interpolated_frame_count: int = 0

    def consistent(self) -> bool:
        return self.input_count == self.kept_count + sum(self.rejections.values())

    def as_text(self) -> str:
        lines = [
            f"input_count = {self.input_count}",
            f"kept_count = {self.kept_count}",
        ]
        lines += [
            f"rejected_{reason} = {self.rejections[reason]}" for reason in ALL_REASONS
        ]
        lines.append(f"interpolated_frame_count = {self.interpolated_frame_count}")
        return "\n".join(lines) + "\n"


def repair_gaps(
    traj: Trajectory, cfg: FilterConfig = FilterConfig()
) -> Union[Trajectory, Rejection]:
    """Fill missing frame indices by linear interpolation, or reject.

    Any consecutive displacement implying a speed above ``max_speed`` is
    spatially inconsistent: teleportation when frames are missing, an
    overspeed otherwise.  Gaps longer than ``max_gap_frames`` or wider
    than ``max_gap_displacement`` reject rather than fabricate a segment.
    Observed frames are never modified.
    """
    frames: list[TrajectoryFrame] = []
    changed = False
    for a, b in zip(traj.frames, traj.frames[1:]):
        frames.append(a)
        missing = b.frame_index - a.frame_index - 1
        dt = b.timestamp - a.timestamp
        disp = (b.position - a.position).norm()
        if disp / dt > cfg.max_speed:
            return Rejection(REASON_TELEPORT if missing > 0 else REASON_SPEED)
        if missing == 0:
            continue
        if missing > cfg.max_gap_frames or disp > cfg.max_gap_displacement:
            return Rejection(REASON_TELEPORT)
        changed = True
        for k in range(1, missing + 1):
            s = k / (missing + 1)
            frames.append(
                TrajectoryFrame(
                    frame_index=a.frame_index + k,
                    timestamp=a.timestamp + s * dt,
                    position=a.position + (b.position - a.position) * s,
                )
            )
    if not changed:
        return traj
    frames.append(traj.frames[-1])
    return Trajectory(traj.pedestrian_id, tuple(frames))


def passes_filters(
    traj: Trajectory, cfg: FilterConfig = FilterConfig()
) -> tuple[bool, Union[str, None]]:
    """Check a gap-repaired trajectory against all quality rules.

    Returns (True, None) or (False, first failing rule).
    """
    if len(traj) < cfg.min_frames:
        return False, REASON_MIN_FRAMES
    arc = arc_length(traj)
    if arc < cfg.min_arc_length:
        return False, REASON_ARC_LENGTH
    for a, b in zip(traj.frames, traj.frames[1:]):
        speed = (b.position - a.position).norm() / (b.timestamp - a.timestamp)
        if speed > cfg.max_speed:
            return False, REASON_SPEED
    net = (traj.frames[-1].position - traj.frames[0].position).norm()
    if arc > 0 and net / arc < cfg.loop_net_ratio:
        return False, REASON_LOOP
    n = len(traj)
    cx = sum(f.position.x for f in traj.frames) / n
    cy = sum(f.position.y for f in traj.frames) / n
    radius = max(
        ((f.position.x - cx) ** 2 + (f.position.y - cy) ** 2) ** 0.5
        for f in traj.frames
    )
    if radius < cfg.stationary_radius:
        return False, REASON_STATIONARY
    return True, None


def run_pipeline(
    trajs: Iterable[Trajectory], cfg: FilterConfig = FilterConfig()
) -> tuple[list[Trajectory], FilterReport]:
    """Gap-repair then filter each trajectory; tally a consistent report."""
    report = FilterReport()
    kept = []
    for traj in trajs:
        report.input_count += 1
        repaired = repair_gaps(traj, cfg)
        if isinstance(repaired, Rejection):
            report.rejections[repaired.reason] += 1
            continue
        report.interpolated_frame_count += len(repaired) - len(traj)
        ok, reason = passes_filters(repaired, cfg)
        if not ok:
            report.rejections[reason] += 1
            continue
        report.kept_count += 1
        kept.append(repaired)
    return kept, report
