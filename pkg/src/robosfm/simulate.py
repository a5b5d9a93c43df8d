"""Forward integration of pedestrian agents under any force provider.

One step freezes the current scene, classifies every agent's behavior,
advances goal-switch timers, evaluates forces, and applies semi-implicit
Euler with a hard speed cap: v' = clamp(v + F dt), x' = x + v' dt.
The robot follows a scripted track; it is never controlled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

from robosfm.behavior import (
    BehaviorLabel,
    ClassifierParams,
    classify_step,
    update_goal_switch,
)
from robosfm.forces import (
    ForceBreakdown,
    PedestrianAgent,
    SfmParams,
    goal_force,
    group_force,
    obstacle_repulsion,
    pedestrian_repulsion,
    robot_repulsion,
    total_force,
)
from robosfm.geometry import (
    ObstacleSet,
    Trajectory,
    TrajectoryFrame,
    Vec2,
    ZERO,
    finite_difference_velocity,
)
from robosfm.records import RobotState, SceneFrame

import numpy as np

DEFAULT_DT = 1.0 / 15.0

PROVIDER_TAGS = (
    "sfm",
    "srfm",
    "neurosfm",
    "neurosfm-no-robot",
    "neurosfm-no-group",
)


@dataclass(frozen=True)
class RolloutConfig:
    dt: float = DEFAULT_DT
    horizon: int = 60  # frames (4 s at 15 Hz)
    speed_cap: float = 2.7  # m/s
    samples_k: int = 1
    rng_seed: int = 42

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.samples_k < 1:
            raise ValueError("samples_k must be at least 1")


def _noise(noise_std: float, seed) -> Vec2:
    if noise_std <= 0:
        return ZERO
    rng = np.random.default_rng(seed)
    nx, ny = rng.normal(0.0, noise_std, 2)
    return Vec2(float(nx), float(ny))


class AnalyticProvider:
    """Closed-form force model; term selection depends on the tag.

    ``sfm`` uses goal/obstacle/pedestrian terms only, ``srfm`` adds an
    always-repulsive robot term, and ``analytic`` is the full
    behavior-routed composition including group cohesion.
    """

    def __init__(self, params: SfmParams = SfmParams(), tag: str = "analytic",
                 noise_std: Optional[float] = None):
        if tag not in ("sfm", "srfm", "analytic"):
            raise ValueError(f"unknown analytic provider tag {tag!r}")
        self.params = params
        self.tag = tag
        self.noise_std = params.noise_std if noise_std is None else noise_std

    def breakdown(self, agent: PedestrianAgent, scene: SceneFrame, seed) -> ForceBreakdown:
        params = self.params
        if self.tag == "analytic":
            quiet = dataclasses.replace(params, noise_std=0.0)
            bd = total_force(agent, scene, quiet)
            return dataclasses.replace(bd, noise=_noise(self.noise_std, seed))
        others = [pos for ped_id, pos, _v in scene.pedestrians if ped_id != agent.id]
        f_r = ZERO
        if self.tag == "srfm" and scene.robot is not None:
            f_r = robot_repulsion(agent, scene.robot, params)
        return ForceBreakdown(
            f_a=goal_force(agent, params),
            f_o=obstacle_repulsion(agent, scene.obstacles, params),
            f_p=pedestrian_repulsion(agent, others, params),
            f_r=f_r,
            f_gr=ZERO,
            noise=_noise(self.noise_std, seed),
        )


class NeuralProvider:
    """Force provider backed by the five trained networks.

    Ablation flags zero out the robot or group term, mirroring the
    model-variant rows of the evaluation tables.
    """

    def __init__(self, nets, params: SfmParams = SfmParams(), noise_std: float = 0.0,
                 zero_robot: bool = False, zero_group: bool = False):
        from robosfm.neural import NetId  # local: neural imports forces

        missing = [n.value for n in NetId if n not in nets]
        if missing:
            raise ValueError(f"missing networks: {', '.join(missing)}")
        self.nets = nets
        self.params = params
        self.noise_std = noise_std
        self.zero_robot = zero_robot
        self.zero_group = zero_group
        self.tag = (
            "neurosfm-no-robot" if zero_robot
            else "neurosfm-no-group" if zero_group
            else "neurosfm"
        )

    def breakdown(self, agent: PedestrianAgent, scene: SceneFrame, seed) -> ForceBreakdown:
        from robosfm.neural import compose_neural

        bd = compose_neural(agent, scene, self.nets, params=self.params)
        if self.zero_robot:
            bd = dataclasses.replace(bd, f_r=ZERO)
        if self.zero_group:
            bd = dataclasses.replace(bd, f_gr=ZERO)
        return dataclasses.replace(bd, noise=_noise(self.noise_std, seed))


ForceProvider = Union[AnalyticProvider, NeuralProvider]


def make_provider(
    tag: str,
    params: SfmParams = SfmParams(),
    nets=None,
    noise_std: Optional[float] = None,
) -> ForceProvider:
    """Build a provider from its evaluation-table tag."""
    if tag in ("sfm", "srfm", "analytic"):
        return AnalyticProvider(params, tag, noise_std=noise_std)
    if tag in ("neurosfm", "neurosfm-no-robot", "neurosfm-no-group"):
        if nets is None:
            raise ValueError(f"provider {tag!r} needs trained network weights")
        return NeuralProvider(
            nets,
            params,
            noise_std=0.0 if noise_std is None else noise_std,
            zero_robot=tag == "neurosfm-no-robot",
            zero_group=tag == "neurosfm-no-group",
        )
    raise ValueError(f"unknown provider tag {tag!r}")


@dataclass(frozen=True)
class SimState:
    """Mutable-by-replacement simulation snapshot."""

    timestamp: float
    agents: tuple[PedestrianAgent, ...]
    robot: Optional[RobotState] = None
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    group_ids: Optional[Mapping[int, int]] = None
    heading_history: Mapping[int, tuple[Optional[float], ...]] = field(
        default_factory=dict
    )

    def scene(self) -> SceneFrame:
        return SceneFrame(
            timestamp=self.timestamp,
            pedestrians=tuple(
                (a.id, a.position, a.velocity) for a in self.agents
            ),
            robot=self.robot,
            obstacles=self.obstacles,
            group_ids=self.group_ids,
        )


def _motion_heading(velocity: Vec2) -> Optional[float]:
    return velocity.angle() if velocity.norm() > 1e-6 else None


def _clamp_speed(v: Vec2, cap: float) -> Vec2:
    speed = v.norm()
    if speed > cap:
        return v * (cap / speed)
    return v


def step(
    state: SimState,
    provider: ForceProvider,
    cfg: RolloutConfig,
    t: int,
    robot_next: Optional[RobotState] = None,
    classifier: ClassifierParams = ClassifierParams(),
) -> SimState:
    """Advance all agents by one synchronous semi-implicit Euler step.

    Forces for every agent come from the frozen current scene; behavior
    labels and goal-switch timers advance through the behavior module
    first.  ``robot_next`` is the scripted robot state after the step.
    """
    scene = state.scene()
    robot_pos = state.robot.position if state.robot is not None else None
    new_agents = []
    new_history = dict(state.heading_history)
    for agent in state.agents:
        heading = _motion_heading(agent.velocity)
        past = state.heading_history.get(agent.id, ())
        past_heading = past[0] if past else heading
        label = classify_step(
            agent.position, heading, past_heading, robot_pos, classifier
        )
        agent = replace(agent, behavior_mode=label)
        agent = update_goal_switch(agent, robot_pos, label, cfg.dt, classifier)
        bd = provider.breakdown(agent, scene, [cfg.rng_seed, t, agent.id])
        if not bd.total.is_finite():
            bad = [
                name
                for name in ("f_a", "f_o", "f_p", "f_r", "f_gr", "noise")
                if not getattr(bd, name).is_finite()
            ]
            raise RuntimeError(
                f"non-finite force for agent {agent.id} at step {t}: "
                f"{', '.join(bad)}"
            )
        velocity = _clamp_speed(agent.velocity + bd.total * cfg.dt, cfg.speed_cap)
        position = agent.position + velocity * cfg.dt
        if not position.is_finite():
            raise RuntimeError(f"non-finite position for agent {agent.id} at step {t}")
        new_agents.append(replace(agent, position=position, velocity=velocity))
        trail = (past + (heading,))[-classifier.heading_lookback :]
        new_history[agent.id] = trail
    return SimState(
        timestamp=state.timestamp + cfg.dt,
        agents=tuple(new_agents),
        robot=robot_next if robot_next is not None else state.robot,
        obstacles=state.obstacles,
        group_ids=state.group_ids,
        heading_history=new_history,
    )


def rollout(
    initial: SimState,
    provider: ForceProvider,
    cfg: RolloutConfig,
    robot_track: Optional[Sequence[Optional[RobotState]]] = None,
    classifier: ClassifierParams = ClassifierParams(),
) -> list[Trajectory]:
    """Repeatedly step the scene; one trajectory per agent, horizon+1 frames."""
    state = initial
    if robot_track is not None and len(robot_track) > 0:
        state = replace(state, robot=robot_track[0])
    rows: dict[int, list[TrajectoryFrame]] = {a.id: [] for a in initial.agents}
    for t in range(cfg.horizon + 1):
        for agent in state.agents:
            rows[agent.id].append(
                TrajectoryFrame(t, state.timestamp, agent.position)
            )
        if t == cfg.horizon:
            break
        robot_next = None
        if robot_track is not None:
            robot_next = robot_track[min(t + 1, len(robot_track) - 1)]
        state = step(state, provider, cfg, t, robot_next, classifier)
    return [
        Trajectory(ped_id, tuple(frames)) for ped_id, frames in sorted(rows.items())
    ]


def scene_track(
    initial: SimState,
    provider: ForceProvider,
    cfg: RolloutConfig,
    robot_track: Optional[Sequence[Optional[RobotState]]] = None,
    classifier: ClassifierParams = ClassifierParams(),
) -> list[SceneFrame]:
    """Like :func:`rollout` but returning the full per-step scene frames."""
    state = initial
    if robot_track is not None and len(robot_track) > 0:
        state = replace(state, robot=robot_track[0])
    frames = []
    for t in range(cfg.horizon + 1):
        frames.append(state.scene())
        if t == cfg.horizon:
            break
        robot_next = None
        if robot_track is not None:
            robot_next = robot_track[min(t + 1, len(robot_track) - 1)]
        state = step(state, provider, cfg, t, robot_next, classifier)
    return frames


def mean_prefix_velocity(prefix: Trajectory) -> Vec2:
    first, last = prefix.frames[0], prefix.frames[-1]
    duration = last.timestamp - first.timestamp
    return (last.position - first.position) / duration


def predict(
    observed_prefix: Trajectory,
    scene_context: Optional[Sequence[SceneFrame]],
    provider: ForceProvider,
    cfg: RolloutConfig,
    goal: Optional[Vec2] = None,
    classifier: ClassifierParams = ClassifierParams(),
    _sample: int = 0,
) -> Trajectory:
    """Roll the observed agent forward while others replay recorded tracks.

    The initial state comes from the last prefix frame; without a supplied
    ground-truth goal, the goal is extrapolated at the mean prefix velocity
    over the remaining horizon.  ``scene_context[k]`` is the recorded scene
    at prediction step k (neighbors and robot); the predicted agent's own
    entry in it is ignored.
    """
    if len(observed_prefix) < 8:
        raise ValueError(
            f"prefix too short: {len(observed_prefix)} frames, need at least 8"
        )
    ped_id = observed_prefix.pedestrian_id
    vels = finite_difference_velocity(observed_prefix)
    velocity = vels[-1]
    position = observed_prefix.frames[-1].position
    t0 = observed_prefix.frames[-1].timestamp
    if goal is None:
        goal = position + mean_prefix_velocity(observed_prefix) * (
            cfg.horizon * cfg.dt
        )
    agent = PedestrianAgent(id=ped_id, position=position, velocity=velocity, goal=goal)

    history: tuple[Optional[float], ...] = tuple(
        _motion_heading(v) for v in vels[:-1]
    )[-classifier.heading_lookback :]

    frames = [TrajectoryFrame(0, t0, position)]
    for t in range(cfg.horizon):
        ctx = None
        if scene_context is not None and t < len(scene_context):
            ctx = scene_context[t]
        if ctx is not None:
            others = tuple(p for p in ctx.pedestrians if p[0] != ped_id)
            robot = ctx.robot
            obstacles = ctx.obstacles
            group_ids = ctx.group_ids
        else:
            others, robot, obstacles, group_ids = (), None, ObstacleSet(), None
        scene = SceneFrame(
            timestamp=t0 + t * cfg.dt,
            pedestrians=others + ((ped_id, agent.position, agent.velocity),),
            robot=robot,
            obstacles=obstacles,
            group_ids=group_ids,
        )
        heading = _motion_heading(agent.velocity)
        past_heading = history[0] if history else heading
        robot_pos = robot.position if robot is not None else None
        label = classify_step(
            agent.position, heading, past_heading, robot_pos, classifier
        )
        agent = replace(agent, behavior_mode=label)
        agent = update_goal_switch(agent, robot_pos, label, cfg.dt, classifier)
        bd = provider.breakdown(agent, scene, [cfg.rng_seed, _sample, t, ped_id])
        if not bd.total.is_finite():
            raise RuntimeError(f"non-finite force at prediction step {t}")
        velocity = _clamp_speed(agent.velocity + bd.total * cfg.dt, cfg.speed_cap)
        agent = replace(
            agent, position=agent.position + velocity * cfg.dt, velocity=velocity
        )
        history = (history + (heading,))[-classifier.heading_lookback :]
        frames.append(TrajectoryFrame(t + 1, t0 + (t + 1) * cfg.dt, agent.position))
    return Trajectory(ped_id, tuple(frames))


def best_of_k(
    observed_prefix: Trajectory,
    ground_truth: Trajectory,
    provider: ForceProvider,
    cfg: RolloutConfig,
    scene_context: Optional[Sequence[SceneFrame]] = None,
    goal: Optional[Vec2] = None,
    classifier: ClassifierParams = ClassifierParams(),
) -> tuple[Trajectory, float]:
    """Best of ``samples_k`` seeded predictions by displacement error.

    ``ground_truth`` covers the future horizon only; the returned
    trajectory is the matching future part of the best sample, so its
    error can be recomputed directly.  Sample seeds nest, making the
    best-of-K error non-increasing in K.
    """
    from robosfm.metrics import ade  # local: metrics imports this module

    best_traj = None
    best_ade = math.inf
    for i in range(cfg.samples_k):
        full = predict(
            observed_prefix, scene_context, provider, cfg,
            goal=goal, classifier=classifier, _sample=i,
        )
        future = Trajectory(full.pedestrian_id, full.frames[1:])
        err = ade(future, ground_truth)
        if err < best_ade:
            best_ade = err
            best_traj = future
    return best_traj, best_ade
