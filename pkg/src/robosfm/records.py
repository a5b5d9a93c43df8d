"""Reading, writing, and assembling pedestrian-robot interaction logs.

The interchange format is a UTF-8 CSV with one row per pedestrian
observation.  Robot columns are `NA` whenever no robot shares the scene.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, TextIO, Union

from robosfm.behavior import BehaviorLabel
from robosfm.geometry import (
    ObstacleSet,
    Trajectory,
    TrajectoryFrame,
    Vec2,
    finite_difference_velocity,
)

HEADER = "frame,timestamp,ped_id,x,y,dist_inc,robot_present,robot_type,robot_influence,robot_x,robot_y"

MOVING_SPEED_THRESHOLD = 0.05  # m/s, sensor-noise floor for "moving"


class RecordFormatError(ValueError):
    """Raised when a CSV stream does not match the record layout."""


class RobotType(Enum):
    HSR = "HSR"
    GO1 = "Go1"
    MPO700 = "MPO700"


@dataclass(frozen=True)
class DatasetRecord:
    """One observation row.

    Robot fields are all set when a robot is present and all absent
    otherwise; `distance_increment` is the displacement from the previous
    frame of the same pedestrian.
    """

    frame_index: int
    timestamp: float
    pedestrian_id: int
    position: Vec2
    distance_increment: float
    robot_present: bool
    robot_type: Optional[RobotType] = None
    robot_influence: Optional[BehaviorLabel] = None
    robot_position: Optional[Vec2] = None

    def __post_init__(self):
        if self.distance_increment < 0:
            raise ValueError("distance_increment must be nonnegative")
        has_fields = (
            self.robot_type is not None
            and self.robot_influence is not None
            and self.robot_position is not None
        )
        no_fields = (
            self.robot_type is None
            and self.robot_influence is None
            and self.robot_position is None
        )
        if self.robot_present and not has_fields:
            raise ValueError("inconsistent robot fields: present but incomplete")
        if not self.robot_present and not no_fields:
            raise ValueError("inconsistent robot fields: absent but populated")


@dataclass(frozen=True)
class RobotState:
    """Robot pose and velocity in the scene."""

    robot_type: RobotType
    position: Vec2
    velocity: Vec2

    @property
    def moving(self) -> bool:
        return self.velocity.norm() > MOVING_SPEED_THRESHOLD


@dataclass(frozen=True)
class SceneFrame:
    """All pedestrian states, the optional robot, and obstacles at one time.

    `pedestrians` holds (id, position, velocity) triples with unique ids;
    `group_ids` optionally maps pedestrian ids to group ids for scenes
    where grouping is known (synthetic scenarios).
    """

    timestamp: float
    pedestrians: tuple[tuple[int, Vec2, Vec2], ...]
    robot: Optional[RobotState] = None
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    group_ids: Optional[Mapping[int, int]] = None

    def __post_init__(self):
        if not isinstance(self.pedestrians, tuple):
            object.__setattr__(self, "pedestrians", tuple(self.pedestrians))
        ids = [p[0] for p in self.pedestrians]
        if len(ids) != len(set(ids)):
            raise ValueError("pedestrian ids must be unique within a frame")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _parse_float(token: str, row: int, col: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise RecordFormatError(f"row {row}: invalid {col} value {token!r}") from None


def _parse_int(token: str, row: int, col: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise RecordFormatError(f"row {row}: invalid {col} value {token!r}") from None


def parse_records(stream: Union[str, TextIO]) -> list[DatasetRecord]:
    """Parse a record CSV, mapping `NA` columns to absent robot fields.

    Accepts a text stream or a string.  Row order is preserved; the first
    data row is row 1 in error messages.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    header = stream.readline().rstrip("\n").rstrip("\r")
    if not header:
        return []
    if header != HEADER:
        raise RecordFormatError(f"unexpected header: {header!r}")
    for row, line in enumerate(stream, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 11:
            raise RecordFormatError(f"row {row}: expected 11 fields, got {len(parts)}")
        (
            s_frame, s_time, s_ped, s_x, s_y, s_dinc,
            s_present, s_type, s_infl, s_rx, s_ry,
        ) = parts
        if s_present not in ("0", "1"):
            raise RecordFormatError(f"row {row}: robot_present must be 0 or 1")
        present = s_present == "1"
        robot_type = None
        robot_influence = None
        robot_position = None
        if present:
            if "NA" in (s_type, s_infl, s_rx, s_ry):
                raise RecordFormatError(f"row {row}: inconsistent robot fields")
            try:
                robot_type = RobotType(s_type)
            except ValueError:
                raise RecordFormatError(
                    f"row {row}: unknown robot_type {s_type!r}"
                ) from None
            try:
                robot_influence = BehaviorLabel(s_infl)
            except ValueError:
                raise RecordFormatError(
                    f"row {row}: unknown robot_influence {s_infl!r}"
                ) from None
            robot_position = Vec2(
                _parse_float(s_rx, row, "robot_x"), _parse_float(s_ry, row, "robot_y")
            )
        else:
            if (s_type, s_infl, s_rx, s_ry) != ("NA", "NA", "NA", "NA"):
                raise RecordFormatError(f"row {row}: inconsistent robot fields")
        try:
            records.append(
                DatasetRecord(
                    frame_index=_parse_int(s_frame, row, "frame"),
                    timestamp=_parse_float(s_time, row, "timestamp"),
                    pedestrian_id=_parse_int(s_ped, row, "ped_id"),
                    position=Vec2(
                        _parse_float(s_x, row, "x"), _parse_float(s_y, row, "y")
                    ),
                    distance_increment=_parse_float(s_dinc, row, "dist_inc"),
                    robot_present=present,
                    robot_type=robot_type,
                    robot_influence=robot_influence,
                    robot_position=robot_position,
                )
            )
        except ValueError as exc:
            if isinstance(exc, RecordFormatError):
                raise
            raise RecordFormatError(f"row {row}: {exc}") from None
    return records


def write_records(records: Iterable[DatasetRecord]) -> str:
    """Serialize records; inverse of :func:`parse_records`.

    Floats use fixed 6-decimal formatting so round trips are byte exact.
    """
    lines = [HEADER]
    for rec in records:
        if rec.robot_present:
            robot_cols = (
                rec.robot_type.value,
                rec.robot_influence.value,
                _fmt(rec.robot_position.x),
                _fmt(rec.robot_position.y),
            )
        else:
            robot_cols = ("NA", "NA", "NA", "NA")
        lines.append(
            ",".join(
                (
                    str(rec.frame_index),
                    _fmt(rec.timestamp),
                    str(rec.pedestrian_id),
                    _fmt(rec.position.x),
                    _fmt(rec.position.y),
                    _fmt(rec.distance_increment),
                    "1" if rec.robot_present else "0",
                )
                + robot_cols
            )
        )
    return "\n".join(lines) + "\n"


def _modal_label(labels: list[BehaviorLabel]) -> Optional[BehaviorLabel]:
    # ties broken by rarity/informativeness: attraction, then avoidance
    if not labels:
        return None
    counts = Counter(labels)
    best = max(counts.values())
    priority = (
        BehaviorLabel.ATTRACTION,
        BehaviorLabel.AVOIDANCE,
        BehaviorLabel.NEUTRAL,
    )
    for label in priority:
        if counts.get(label, 0) == best:
            return label
    return None


def assemble(
    records: Iterable[DatasetRecord],
    obstacles: ObstacleSet = ObstacleSet(),
) -> tuple[list[Trajectory], list[SceneFrame], dict[int, BehaviorLabel]]:
    """Group records into trajectories, per-frame scenes, and a label map.

    Robot velocity comes from finite differences of its position over the
    scene timeline; the per-trajectory label is the modal per-record
    influence (ties: attraction > avoidance > neutral).
    """
    records = list(records)
    by_ped: dict[int, list[DatasetRecord]] = {}
    seen: set[tuple[int, int]] = set()
    for rec in records:
        key = (rec.pedestrian_id, rec.frame_index)
        if key in seen:
            raise ValueError(
                f"duplicate observation: pedestrian {rec.pedestrian_id} "
                f"frame {rec.frame_index}"
            )
        seen.add(key)
        by_ped.setdefault(rec.pedestrian_id, []).append(rec)

    trajectories = []
    for ped_id in sorted(by_ped):
        recs = sorted(by_ped[ped_id], key=lambda r: r.frame_index)
        trajectories.append(
            Trajectory(
                pedestrian_id=ped_id,
                frames=tuple(
                    TrajectoryFrame(r.frame_index, r.timestamp, r.position)
                    for r in recs
                ),
            )
        )

    # per-frame pedestrian velocities, aligned with each trajectory
    velocity_of: dict[tuple[int, int], Vec2] = {}
    for traj in trajectories:
        if len(traj) >= 2:
            vels = finite_difference_velocity(traj)
        else:
            vels = [Vec2(0.0, 0.0)]
        for frame, v in zip(traj.frames, vels):
            velocity_of[(traj.pedestrian_id, frame.frame_index)] = v

    by_frame: dict[int, list[DatasetRecord]] = {}
    for rec in records:
        by_frame.setdefault(rec.frame_index, []).append(rec)

    frame_indices = sorted(by_frame)
    robot_samples = []  # (frame_order, type, position) where robot present
    for order, fi in enumerate(frame_indices):
        for rec in by_frame[fi]:
            if rec.robot_present:
                robot_samples.append((order, rec.robot_type, rec.robot_position))
                break

    robot_velocity: dict[int, Vec2] = {}
    for k, (order, _, pos) in enumerate(robot_samples):
        if k + 1 < len(robot_samples):
            nxt_order, _, nxt_pos = robot_samples[k + 1]
            t0 = by_frame[frame_indices[order]][0].timestamp
            t1 = by_frame[frame_indices[nxt_order]][0].timestamp
            robot_velocity[order] = (nxt_pos - pos) / (t1 - t0)
        elif k > 0:
            robot_velocity[order] = robot_velocity[robot_samples[k - 1][0]]
        else:
            robot_velocity[order] = Vec2(0.0, 0.0)
    robot_at = {order: (rtype, pos) for order, rtype, pos in robot_samples}

    scenes = []
    for order, fi in enumerate(frame_indices):
        recs = by_frame[fi]
        timestamp = recs[0].timestamp
        peds = tuple(
            (r.pedestrian_id, r.position, velocity_of[(r.pedestrian_id, fi)])
            for r in sorted(recs, key=lambda r: r.pedestrian_id)
        )
        robot = None
        if order in robot_at:
            rtype, pos = robot_at[order]
            robot = RobotState(rtype, pos, robot_velocity[order])
        scenes.append(
            SceneFrame(
                timestamp=timestamp, pedestrians=peds, robot=robot,
                obstacles=obstacles,
            )
        )

    labels = {}
    for ped_id, recs in by_ped.items():
        modal = _modal_label([r.robot_influence for r in recs if r.robot_influence])
        if modal is not None:
            labels[ped_id] = modal
    return trajectories, scenes, labels
