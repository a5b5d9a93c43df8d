"""Analytic social forces: goal attraction, pedestrian/obstacle/robot
repulsion, group cohesion, and their composition with behavior-mode
routing.

All repulsive terms derive from exponentially decaying interaction
potentials; forces are accelerations on a unit-mass pedestrian.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from robosfm.behavior import BehaviorLabel
from robosfm.geometry import (
    ObstacleSet,
    Vec2,
    ZERO,
    project_on_segment,
)
from robosfm.records import RobotState, SceneFrame

COINCIDENT_EPS = 1e-6  # m, below this a pair is treated as coincident
HEAD_ON_DEFLECTION = math.pi / 4  # rad, symmetry tie-break toward the agent's right
HEAD_ON_CROSS_TOL = 0.1  # sin of the dead-ahead cone (~5.7 deg) that triggers it


class CoincidentAgentsWarning(UserWarning):
    """Emitted when a repulsion pair is skipped for being coincident."""


@dataclass(frozen=True)
class SfmParams:
    """Every tunable of the analytic force model.

    Amplitudes are in m^2/s^2, ranges in meters; values are the usual
    social-force literature conventions and are fully config-exposed.
    """

    relaxation_time: float = 0.5  # s
    desired_speed: float = 1.34  # m/s
    ped_amplitude: float = 2.1  # pedestrian potential amplitude
    ped_range: float = 0.3  # m
    obs_amplitude: float = 10.0  # obstacle potential amplitude
    obs_range: float = 0.2  # m
    robot_amplitude_stationary: float = 3.0
    robot_amplitude_moving: float = 4.5
    robot_range: float = 1.0  # m
    fov_half_angle: float = math.radians(100.0)  # rad
    fov_weight: float = 0.5  # out-of-view down-weight c in [0, 1]
    group_threshold: float = 1.5  # m, dead zone around the group centroid
    group_gain: float = 1.0  # 1/s^2
    noise_std: float = 0.05  # m/s^2 per axis

    def __post_init__(self):
        if self.relaxation_time <= 0:
            raise ValueError("relaxation_time must be positive")
        for name in ("ped_range", "obs_range", "robot_range", "group_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.robot_amplitude_moving < self.robot_amplitude_stationary:
            raise ValueError("moving robot amplitude must be >= stationary")
        if not 0.0 <= self.fov_weight <= 1.0:
            raise ValueError("fov_weight must be in [0, 1]")


@dataclass(frozen=True)
class PedestrianAgent:
    """Simulated pedestrian state, including behavior-mode bookkeeping.

    ``original_goal`` is set only while an attraction goal-switch is
    active, so the true destination can be restored exactly on expiry.
    """

    id: int
    position: Vec2
    velocity: Vec2
    goal: Vec2
    group_id: Optional[int] = None
    behavior_mode: BehaviorLabel = BehaviorLabel.NEUTRAL
    goal_switch_remaining: float = 0.0
    original_goal: Optional[Vec2] = None

    def __post_init__(self):
        if not self.goal.is_finite():
            raise ValueError("goal must be finite")
        if self.goal_switch_remaining < 0:
            raise ValueError("goal_switch_remaining must be nonnegative")


@dataclass(frozen=True)
class ForceBreakdown:
    """Per-term forces and their exact in-order sum."""

    f_a: Vec2 = ZERO
    f_o: Vec2 = ZERO
    f_p: Vec2 = ZERO
    f_r: Vec2 = ZERO
    f_gr: Vec2 = ZERO
    noise: Vec2 = ZERO
    total: Vec2 = field(init=False)

    def __post_init__(self):
        total = self.f_a + self.f_o + self.f_p + self.f_r + self.f_gr + self.noise
        object.__setattr__(self, "total", total)


def _heading(agent: PedestrianAgent) -> Optional[Vec2]:
    # a stationary agent faces its goal; an agent at its goal faces nowhere
    if agent.velocity.norm() > 1e-9:
        return agent.velocity.normalized()
    offset = agent.goal - agent.position
    if offset.norm() > 1e-9:
        return offset.normalized()
    return None


def _nudge_head_on(heading: Optional[Vec2], direction: Vec2) -> Vec2:
    """Break head-on symmetry by deviating to the agent's right.

    While the repulsion source sits inside a narrow dead-ahead cone, the
    repulsion is redirected to 45 degrees toward the agent's right of
    straight-back; outside the cone the force is untouched.  A one-shot
    nudge would be damped out by goal relaxation, so the cone has a
    small but finite width, and the redirected direction is anchored to
    the heading so the push is always rightward.
    """
    if heading is None:
        return direction
    if abs(heading.cross(direction)) < HEAD_ON_CROSS_TOL and heading.dot(direction) < 0:
        return (-heading).rotated(HEAD_ON_DEFLECTION)
    return direction


def goal_force(agent: PedestrianAgent, params: SfmParams = SfmParams()) -> Vec2:
    """Relaxation toward the desired velocity: (v_des * e_goal - v) / tau.

    An agent standing on its goal just brakes (-v / tau).
    """
    offset = agent.goal - agent.position
    if offset.norm() <= 1e-9:
        return -agent.velocity / params.relaxation_time
    e_goal = offset.normalized()
    return (e_goal * params.desired_speed - agent.velocity) / params.relaxation_time


def pedestrian_repulsion(
    agent: PedestrianAgent,
    others: Sequence[Vec2],
    params: SfmParams = SfmParams(),
) -> Vec2:
    """Anisotropic exponential repulsion from other pedestrians.

    Magnitude per neighbor is (V0/sigma) * exp(-b/sigma) along the line
    from the neighbor to the agent, down-weighted by ``fov_weight`` for
    neighbors outside the field of view.  Coincident pairs are skipped
    with a warning.
    """
    heading = _heading(agent)
    total = ZERO
    for other in others:
        offset = agent.position - other
        b = offset.norm()
        if b < COINCIDENT_EPS:
            warnings.warn(
                f"skipping coincident pedestrian pair at ({other.x}, {other.y})",
                CoincidentAgentsWarning,
                stacklevel=2,
            )
            continue
        direction = offset / b
        weight = 1.0
        if heading is not None:
            to_other = -direction
            cos_view = heading.dot(to_other)
            if cos_view < math.cos(params.fov_half_angle):
                weight = params.fov_weight
        direction = _nudge_head_on(heading, direction)
        magnitude = (params.ped_amplitude / params.ped_range) * math.exp(
            -b / params.ped_range
        )
        total = total + direction * (weight * magnitude)
    return total


def obstacle_repulsion(
    agent: PedestrianAgent,
    obstacles: ObstacleSet,
    params: SfmParams = SfmParams(),
) -> Vec2:
    """Exponential repulsion summed over obstacle segments.

    Each segment repels from its nearest point with magnitude
    (U0/R) * exp(-b/R), isotropically; opposing walls cancel exactly at
    the midline.  No obstacles, no force.
    """
    total = ZERO
    for a, b_end in obstacles.segments:
        point = project_on_segment(agent.position, a, b_end)
        dist = (agent.position - point).norm()
        total = total + _point_obstacle_force(agent.position, point, dist, params)
    return total


def _point_obstacle_force(
    position: Vec2, point: Vec2, b: float, params: SfmParams
) -> Vec2:
    magnitude = (params.obs_amplitude / params.obs_range) * math.exp(
        -b / params.obs_range
    )
    if b < COINCIDENT_EPS:
        return Vec2(magnitude, 0.0)
    return (position - point) / b * magnitude


def robot_repulsion(
    agent: PedestrianAgent,
    robot: RobotState,
    params: SfmParams = SfmParams(),
) -> Vec2:
    """Repulsion away from the robot with a motion-dependent amplitude.

    The potential is A * sigma_r * exp(-b/sigma_r), so the magnitude is
    A * exp(-b/sigma_r) with A higher for a moving robot.  At b below
    the coincidence guard the magnitude caps at A.
    """
    amplitude = (
        params.robot_amplitude_moving if robot.moving
        else params.robot_amplitude_stationary
    )
    offset = agent.position - robot.position
    b = offset.norm()
    if b < COINCIDENT_EPS:
        fallback = _heading(agent)
        direction = -fallback if fallback is not None else Vec2(1.0, 0.0)
        return direction * amplitude
    direction = _nudge_head_on(_heading(agent), offset / b)
    return direction * (amplitude * math.exp(-b / params.robot_range))


def group_force(
    agent: PedestrianAgent,
    group_members: Sequence[Vec2],
    params: SfmParams = SfmParams(),
) -> Vec2:
    """Linear attraction toward the group centroid beyond a dead zone.

    The centroid includes the agent itself; inside ``group_threshold``
    the force is zero, beyond it grows as k * (dist - threshold).
    Singleton groups feel nothing.
    """
    if not group_members:
        return ZERO
    n = len(group_members) + 1
    cx = (sum(p.x for p in group_members) + agent.position.x) / n
    cy = (sum(p.y for p in group_members) + agent.position.y) / n
    d = Vec2(cx, cy) - agent.position
    dist = d.norm()
    if dist <= params.group_threshold:
        return ZERO
    return d / dist * (params.group_gain * (dist - params.group_threshold))


def _group_member_positions(agent: PedestrianAgent, scene: SceneFrame) -> list[Vec2]:
    if agent.group_id is None or scene.group_ids is None:
        return []
    return [
        pos
        for ped_id, pos, _vel in scene.pedestrians
        if ped_id != agent.id and scene.group_ids.get(ped_id) == agent.group_id
    ]


def total_force(
    agent: PedestrianAgent,
    scene: SceneFrame,
    params: SfmParams = SfmParams(),
    rng_seed: Union[int, Sequence[int], None] = None,
) -> ForceBreakdown:
    """Compose all force terms plus per-axis Gaussian noise.

    Behavior-mode routing for the robot term: avoidance keeps the robot
    repulsion; neutral treats the robot as a point obstacle; attraction
    with an active goal switch retargets the goal to the robot and drops
    the robot force entirely.
    """
    robot = scene.robot
    effective = agent
    f_r = ZERO
    if robot is not None:
        mode = agent.behavior_mode
        if mode is BehaviorLabel.ATTRACTION and agent.goal_switch_remaining > 0:
            effective = PedestrianAgent(
                id=agent.id,
                position=agent.position,
                velocity=agent.velocity,
                goal=robot.position,
                group_id=agent.group_id,
                behavior_mode=agent.behavior_mode,
            )
        elif mode is BehaviorLabel.AVOIDANCE:
            f_r = robot_repulsion(agent, robot, params)
        else:
            # neutral (and expired attraction): robot acts as a point obstacle
            b = (agent.position - robot.position).norm()
            f_r = _point_obstacle_force(agent.position, robot.position, b, params)

    others = [pos for ped_id, pos, _vel in scene.pedestrians if ped_id != agent.id]
    if params.noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        nx, ny = rng.normal(0.0, params.noise_std, 2)
        noise = Vec2(float(nx), float(ny))
    else:
        noise = ZERO
    return ForceBreakdown(
        f_a=goal_force(effective, params),
        f_o=obstacle_repulsion(agent, scene.obstacles, params),
        f_p=pedestrian_repulsion(agent, others, params),
        f_r=f_r,
        f_gr=group_force(agent, _group_member_positions(agent, scene), params),
        noise=noise,
    )
