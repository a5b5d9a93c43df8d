"""Training-data curation for the five force networks.

Each network gets samples only from the situations it is responsible
for: straight solo walks feed the goal network, close obstacle passes
the obstacle network, in-view neighbor encounters the pedestrian
network, evasive robot encounters the robot network, and grouped
walkers the group network.  Targets are residual accelerations: the
observed second finite difference minus the analytic estimate of every
other force term, so each network can be trained in isolation.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence

from robosfm.behavior import BehaviorLabel, ClassifierParams, classify_step
from robosfm.forces import (
    PedestrianAgent,
    SfmParams,
    _point_obstacle_force,
    goal_force,
    group_force,
    obstacle_repulsion,
    pedestrian_repulsion,
    robot_repulsion,
)
from robosfm.geometry import (
    Trajectory,
    TrajectoryFrame,
    Vec2,
    ZERO,
    arc_length,
    finite_difference_velocity,
    nearest_obstacle_point,
)
from robosfm.neural import (
    NEIGHBOR_RADIUS,
    OBSTACLE_RADIUS,
    ROBOT_RADIUS,
    NetId,
    TrainingSample,
    goal_input,
    group_input,
    in_fov,
    obstacle_input,
    pedestrian_input,
    robot_input,
)
from robosfm.records import SceneFrame
from robosfm.scenarios import Scenario
from robosfm.simulate import AnalyticProvider, RolloutConfig, rollout, scene_track

GOAL_STRAIGHTNESS = 0.98  # net / arc ratio for goal-network trajectories
GOAL_STANDOFF = 0.5  # m, skip frames closer than this to the goal
CLAMP_MARGIN = 0.999  # drop frames whose implied speed hit the cap


def _scene_lookup(scenes: Sequence[SceneFrame]) -> dict[float, SceneFrame]:
    return {scene.timestamp: scene for scene in scenes}


def _step_labels_like_sim(
    traj: Trajectory,
    robot_track: Sequence[Optional[Vec2]],
    classifier: ClassifierParams,
) -> list[BehaviorLabel]:
    """Reconstruct the per-step labels a rollout would have produced.

    The simulator classifies from the agent's state velocity, which is
    the backward finite difference of the logged positions; replaying
    the same heading ring buffer reproduces its labels except in the
    first few frames, where the initial velocity is unobservable.
    """
    vels = finite_difference_velocity(traj)
    labels = []
    history: tuple[Optional[float], ...] = ()
    for t in range(len(traj)):
        v = vels[t - 1] if t >= 1 else vels[0]
        heading = v.angle() if v.norm() > 1e-6 else None
        past = history[0] if history else heading
        labels.append(
            classify_step(
                traj.frames[t].position, heading, past, robot_track[t], classifier
            )
        )
        history = (history + (heading,))[-classifier.heading_lookback :]
    return labels


def _analytic_terms(
    agent: PedestrianAgent,
    scene: SceneFrame,
    label: BehaviorLabel,
    params: SfmParams,
) -> dict[str, Vec2]:
    """Label-routed analytic force estimate, term by term (no noise).

    Attraction is attributed no robot term and the original goal; the
    goal-switch timing cannot be reconstructed from logs.
    """
    others = [pos for ped_id, pos, _v in scene.pedestrians if ped_id != agent.id]
    f_r = ZERO
    if scene.robot is not None:
        if label is BehaviorLabel.AVOIDANCE:
            f_r = robot_repulsion(agent, scene.robot, params)
        elif label is BehaviorLabel.NEUTRAL:
            b = (agent.position - scene.robot.position).norm()
            f_r = _point_obstacle_force(agent.position, scene.robot.position, b, params)
    members = []
    if agent.group_id is not None and scene.group_ids is not None:
        members = [
            pos
            for ped_id, pos, _v in scene.pedestrians
            if ped_id != agent.id and scene.group_ids.get(ped_id) == agent.group_id
        ]
    return {
        "f_a": goal_force(agent, params),
        "f_o": obstacle_repulsion(agent, scene.obstacles, params),
        "f_p": pedestrian_repulsion(agent, others, params),
        "f_r": f_r,
        "f_gr": group_force(agent, members, params),
    }


def _residual(accel: Vec2, terms: Mapping[str, Vec2], own: str) -> Vec2:
    target = accel
    for name, value in terms.items():
        if name != own:
            target = target - value
    return target


def curate(
    trajectories: Sequence[Trajectory],
    labels: Mapping[int, BehaviorLabel],
    scenes: Sequence[SceneFrame],
    params: SfmParams = SfmParams(),
    classifier: ClassifierParams = ClassifierParams(),
    goals: Optional[Mapping[int, Vec2]] = None,
    require_all: bool = True,
) -> list[TrainingSample]:
    """Extract per-network training samples from labeled trajectories.

    ``scenes`` must carry the frames the trajectories were observed in
    (matched by timestamp).  ``goals`` optionally supplies true goals;
    otherwise the final trajectory position stands in.  Residual
    attribution routes the robot term by the reconstructed per-step
    label, so targets stay consistent with how the motion was produced.
    Raises if any network ends up with no samples unless ``require_all``
    is false.
    """
    by_time = _scene_lookup(scenes)
    samples: list[TrainingSample] = []
    counts = {net: 0 for net in NetId}

    for traj in trajectories:
        if len(traj) < 3:
            continue
        ped_id = traj.pedestrian_id
        label = labels.get(ped_id, BehaviorLabel.NEUTRAL)
        goal = goals.get(ped_id) if goals else None
        if goal is None:
            goal = traj.frames[-1].position
        robot_track = []
        for frame in traj.frames:
            scene = by_time.get(frame.timestamp)
            robot = scene.robot if scene is not None else None
            robot_track.append(robot.position if robot is not None else None)
        step_labels = _step_labels_like_sim(traj, robot_track, classifier)
        vels = finite_difference_velocity(traj)
        arc = arc_length(traj)
        net_disp = (traj.frames[-1].position - traj.frames[0].position).norm()
        straight = arc > 0 and net_disp / arc > GOAL_STRAIGHTNESS

        # solo check for the goal network: no influence other than the
        # goal anywhere along the trajectory (no pedestrian or robot
        # within 3 m, no obstacle within its selection radius)
        solo = True
        for frame in traj.frames:
            scene = by_time.get(frame.timestamp)
            if scene is None:
                continue
            if (
                scene.robot is not None
                and (scene.robot.position - frame.position).norm() < NEIGHBOR_RADIUS
            ):
                solo = False
                break
            if scene.obstacles:
                _, obs_dist = nearest_obstacle_point(frame.position, scene.obstacles)
                if obs_dist < OBSTACLE_RADIUS:
                    solo = False
                    break
            for other_id, pos, _v in scene.pedestrians:
                if other_id != ped_id and (pos - frame.position).norm() < NEIGHBOR_RADIUS:
                    solo = False
                    break
            if not solo:
                break

        for t in range(1, len(traj) - 1):
            frame = traj.frames[t]
            scene = by_time.get(frame.timestamp)
            if scene is None:
                continue
            dt = traj.frames[t + 1].timestamp - frame.timestamp
            velocity = vels[t - 1]  # backward difference = state velocity
            accel = (vels[t] - velocity) / dt
            if vels[t].norm() >= CLAMP_MARGIN * 2.7:
                continue  # speed cap may have clipped the dynamics
            step_label = step_labels[t]
            agent = PedestrianAgent(
                id=ped_id,
                position=frame.position,
                velocity=velocity,
                goal=goal,
                group_id=(scene.group_ids or {}).get(ped_id),
                behavior_mode=step_label,
            )
            terms = _analytic_terms(agent, scene, step_label, params)

            goal_offset = goal - agent.position
            if straight and solo and goal_offset.norm() > GOAL_STANDOFF:
                samples.append(
                    TrainingSample(
                        NetId.GOAL,
                        goal_input(velocity, goal_offset.normalized()),
                        _residual(accel, terms, "f_a"),
                    )
                )
                counts[NetId.GOAL] += 1

            if scene.obstacles:
                point, dist = nearest_obstacle_point(agent.position, scene.obstacles)
                if dist < OBSTACLE_RADIUS and dist > 1e-9:
                    direction = (agent.position - point) / dist
                    samples.append(
                        TrainingSample(
                            NetId.OBSTACLE,
                            obstacle_input(dist, direction),
                            _residual(accel, terms, "f_o"),
                        )
                    )
                    counts[NetId.OBSTACLE] += 1

            nearest = None
            for other_id, pos, _v in scene.pedestrians:
                if other_id == ped_id:
                    continue
                dist = (pos - agent.position).norm()
                if dist < 1e-9 or dist >= NEIGHBOR_RADIUS:
                    continue
                if not in_fov(agent, pos, params.fov_half_angle):
                    continue
                if nearest is None or dist < nearest[0]:
                    nearest = (dist, pos)
            if nearest is not None:
                dist, pos = nearest
                chosen = pedestrian_repulsion(agent, [pos], params)
                others_rest = terms["f_p"] - chosen
                target = _residual(accel, terms, "f_p") - others_rest
                direction = (agent.position - pos) / dist
                samples.append(
                    TrainingSample(
                        NetId.PEDESTRIAN,
                        pedestrian_input(velocity, dist, direction),
                        target,
                    )
                )
                counts[NetId.PEDESTRIAN] += 1

            if (
                label is BehaviorLabel.AVOIDANCE
                and step_label is BehaviorLabel.AVOIDANCE
                and scene.robot is not None
            ):
                offset = agent.position - scene.robot.position
                dist = offset.norm()
                if 1e-9 < dist < ROBOT_RADIUS:
                    samples.append(
                        TrainingSample(
                            NetId.ROBOT,
                            robot_input(
                                dist, offset / dist, scene.robot.velocity.norm()
                            ),
                            _residual(accel, terms, "f_r"),
                        )
                    )
                    counts[NetId.ROBOT] += 1

            if agent.group_id is not None and scene.group_ids is not None:
                members = [
                    pos
                    for other_id, pos, _v in scene.pedestrians
                    if other_id != ped_id
                    and scene.group_ids.get(other_id) == agent.group_id
                ]
                if members:
                    n = len(members) + 1
                    cx = (sum(p.x for p in members) + agent.position.x) / n
                    cy = (sum(p.y for p in members) + agent.position.y) / n
                    offset = Vec2(cx, cy) - agent.position
                    if goal_offset.norm() > 1e-9:
                        aligned = velocity.dot(goal_offset.normalized())
                    else:
                        aligned = 0.0
                    samples.append(
                        TrainingSample(
                            NetId.GROUP,
                            group_input(aligned, offset),
                            _residual(accel, terms, "f_gr"),
                        )
                    )
                    counts[NetId.GROUP] += 1

    if require_all:
        starved = [net.value for net in NetId if counts[net] == 0]
        if starved:
            raise ValueError(f"no training samples for network(s): {', '.join(starved)}")
    return samples


def synthesize(
    params: SfmParams,
    scenario: Scenario,
    rng_seed: int = 42,
    classifier: ClassifierParams = ClassifierParams(),
) -> list[Trajectory]:
    """Roll the full analytic model over a scenario to generate data.

    Deterministic given the seed; raises on divergence.
    """
    provider = AnalyticProvider(params, tag="analytic")
    cfg = RolloutConfig(
        dt=scenario.dt, horizon=scenario.horizon, rng_seed=rng_seed
    )
    return rollout(
        scenario.initial_state(), provider, cfg,
        robot_track=scenario.robot_track(), classifier=classifier,
    )


def synthesize_with_scenes(
    params: SfmParams,
    scenario: Scenario,
    rng_seed: int = 42,
    classifier: ClassifierParams = ClassifierParams(),
) -> tuple[list[Trajectory], list[SceneFrame]]:
    """Synthesize a scenario, also keeping the per-step scene frames."""
    provider = AnalyticProvider(params, tag="analytic")
    cfg = RolloutConfig(dt=scenario.dt, horizon=scenario.horizon, rng_seed=rng_seed)
    scenes = scene_track(
        scenario.initial_state(), provider, cfg,
        robot_track=scenario.robot_track(), classifier=classifier,
    )
    rows: dict[int, list[TrajectoryFrame]] = {}
    for t, scene in enumerate(scenes):
        for ped_id, pos, _vel in scene.pedestrians:
            rows.setdefault(ped_id, []).append(
                TrajectoryFrame(t, scene.timestamp, pos)
            )
    trajs = [Trajectory(pid, tuple(frames)) for pid, frames in sorted(rows.items())]
    return trajs, scenes
