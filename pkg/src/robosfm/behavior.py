"""Heuristic classification of pedestrian responses to a robot.

A pedestrian inside the robot's social zone is labeled by comparing the
bearing to the robot against an attraction cone around the current
heading, and by how far the heading has opened away from the robot since
a past reference heading.  The module also drives the temporary
goal-switch that models attraction during simulation.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

from robosfm.geometry import Trajectory, Vec2, finite_difference_velocity

if TYPE_CHECKING:
    from robosfm.forces import PedestrianAgent


class BehaviorLabel(Enum):
    """Categorical pedestrian response to the robot."""

    ATTRACTION = "attractive"
    NEUTRAL = "neutral"
    AVOIDANCE = "avoidance"


@dataclass(frozen=True)
class ClassifierParams:
    cone_half_angle: float = math.radians(20.0)  # attraction cone half-width, rad
    deviation_threshold: float = math.radians(10.0)  # heading-opening threshold, rad
    zone_radius: float = 3.0  # social zone of influence, m
    attraction_duration: float = 5.0  # goal-switch length, s
    heading_lookback: int = 8  # frames between current and past heading
    attraction_run_frames: int = 3  # consecutive steps for a trajectory label
    avoidance_step_ratio: float = 0.10  # share of in-zone steps for avoidance

    def __post_init__(self):
        if not 0.0 < self.cone_half_angle < math.pi / 2:
            raise ValueError("cone_half_angle must be in (0, pi/2)")
        if self.deviation_threshold <= 0:
            raise ValueError("deviation_threshold must be positive")
        if self.zone_radius <= 0:
            raise ValueError("zone_radius must be positive")
        if self.attraction_duration <= 0:
            raise ValueError("attraction_duration must be positive")


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def classify_step(
    position: Vec2,
    heading: Optional[float],
    past_heading: Optional[float],
    robot_position: Optional[Vec2],
    params: ClassifierParams = ClassifierParams(),
) -> BehaviorLabel:
    """Label a single step of pedestrian motion relative to the robot.

    Outside the social zone the label is always neutral.  Inside, a robot
    within the attraction cone of the heading wins; otherwise a heading
    that opened away from the robot bearing by more than the deviation
    threshold (relative to the past heading) counts as avoidance.
    A pedestrian with undefined heading cannot signal intent.
    """
    if robot_position is None or heading is None:
        return BehaviorLabel.NEUTRAL
    offset = robot_position - position
    dist = offset.norm()
    if dist > params.zone_radius:
        return BehaviorLabel.NEUTRAL
    if dist < 1e-9:
        # standing at the robot: trivially inside any cone
        return BehaviorLabel.ATTRACTION
    bearing = offset.angle()
    if abs(wrap_angle(bearing - heading)) <= params.cone_half_angle:
        return BehaviorLabel.ATTRACTION
    if past_heading is not None:
        opened = abs(wrap_angle(heading - bearing)) - abs(wrap_angle(past_heading - bearing))
        if opened > params.deviation_threshold:
            return BehaviorLabel.AVOIDANCE
    return BehaviorLabel.NEUTRAL


def _headings(traj: Trajectory) -> list[Optional[float]]:
    if len(traj) < 2:
        return [None] * len(traj)
    headings: list[Optional[float]] = []
    for v in finite_difference_velocity(traj):
        headings.append(v.angle() if v.norm() > 1e-6 else None)
    return headings


def classify_steps(
    traj: Trajectory,
    robot_track: Sequence[Optional[Vec2]],
    params: ClassifierParams = ClassifierParams(),
) -> list[BehaviorLabel]:
    """Per-frame labels for a trajectory against a time-aligned robot track."""
    if len(robot_track) != len(traj):
        raise ValueError(
            f"robot track length {len(robot_track)} != trajectory length {len(traj)}"
        )
    headings = _headings(traj)
    labels = []
    for i, frame in enumerate(traj.frames):
        past = headings[max(0, i - params.heading_lookback)]
        labels.append(
            classify_step(frame.position, headings[i], past, robot_track[i], params)
        )
    return labels


def classify_trajectory(
    traj: Trajectory,
    robot_track: Sequence[Optional[Vec2]],
    params: ClassifierParams = ClassifierParams(),
) -> BehaviorLabel:
    """Aggregate per-step labels into one trajectory-level label.

    Attraction requires a sustained run of attraction steps; avoidance
    requires avoidance steps on a minimum share of the in-zone steps.
    A trajectory that never shares the scene with the robot is neutral.
    """
    if not any(r is not None for r in robot_track):
        return BehaviorLabel.NEUTRAL
    step_labels = classify_steps(traj, robot_track, params)

    run = 0
    for lab in step_labels:
        run = run + 1 if lab is BehaviorLabel.ATTRACTION else 0
        if run >= params.attraction_run_frames:
            return BehaviorLabel.ATTRACTION

    in_zone = 0
    avoid = 0
    for frame, robot, lab in zip(traj.frames, robot_track, step_labels):
        if robot is None or (robot - frame.position).norm() > params.zone_radius:
            continue
        in_zone += 1
        if lab is BehaviorLabel.AVOIDANCE:
            avoid += 1
    if in_zone > 0 and avoid >= params.avoidance_step_ratio * in_zone:
        return BehaviorLabel.AVOIDANCE
    return BehaviorLabel.NEUTRAL


def update_goal_switch(
    agent: "PedestrianAgent",
    robot_position: Optional[Vec2],
    label: BehaviorLabel,
    dt: float,
    params: ClassifierParams = ClassifierParams(),
) -> "PedestrianAgent":
    """Advance the temporary attraction goal-switch by one step.

    A fresh attraction label retargets the agent's goal to the robot for
    ``attraction_duration`` seconds; while active, the goal tracks the
    robot and the timer counts down, and on expiry the original goal is
    restored exactly.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    active = agent.original_goal is not None
    if not active:
        if label is BehaviorLabel.ATTRACTION and robot_position is not None:
            return dataclasses.replace(
                agent,
                goal=robot_position,
                original_goal=agent.goal,
                goal_switch_remaining=params.attraction_duration,
            )
        return agent
    remaining = agent.goal_switch_remaining - dt
    if remaining <= 0:
        return dataclasses.replace(
            agent,
            goal=agent.original_goal,
            original_goal=None,
            goal_switch_remaining=0.0,
        )
    return dataclasses.replace(
        agent,
        goal=robot_position if robot_position is not None else agent.goal,
        goal_switch_remaining=remaining,
    )
