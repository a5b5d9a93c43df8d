"""Scenario specifications for synthetic scenes.

A scenario is a TOML file (or equivalent dict) naming the agents with
their goals, an optional scripted robot, and wall segments.  It expands
into the initial simulation state and the per-step robot track.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from robosfm.behavior import BehaviorLabel
from robosfm.forces import PedestrianAgent
from robosfm.geometry import ObstacleSet, Vec2
from robosfm.records import RobotState, RobotType
from robosfm.simulate import DEFAULT_DT, SimState


@dataclass(frozen=True)
class AgentSpec:
    id: int
    position: Vec2
    goal: Vec2
    velocity: Vec2 = Vec2(0.0, 0.0)
    group_id: Optional[int] = None
    behavior: BehaviorLabel = BehaviorLabel.NEUTRAL


@dataclass(frozen=True)
class RobotSpec:
    robot_type: RobotType = RobotType.GO1
    start: Vec2 = Vec2(0.0, 0.0)
    velocity: Vec2 = Vec2(0.0, 0.0)
    track: Optional[tuple[Vec2, ...]] = None  # explicit per-step positions


@dataclass(frozen=True)
class Scenario:
    agents: tuple[AgentSpec, ...]
    robot: Optional[RobotSpec] = None
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    dt: float = DEFAULT_DT
    horizon: int = 75

    def robot_track(self) -> Optional[list[RobotState]]:
        """Scripted robot states for steps 0..horizon (holds last position)."""
        if self.robot is None:
            return None
        spec = self.robot
        if spec.track is not None:
            positions = list(spec.track)
            while len(positions) < self.horizon + 1:
                positions.append(positions[-1])
            positions = positions[: self.horizon + 1]
        else:
            positions = [
                spec.start + spec.velocity * (k * self.dt)
                for k in range(self.horizon + 1)
            ]
        states = []
        for k, pos in enumerate(positions):
            if k + 1 < len(positions):
                vel = (positions[k + 1] - pos) / self.dt
            elif k > 0:
                vel = (pos - positions[k - 1]) / self.dt
            else:
                vel = Vec2(0.0, 0.0)
            states.append(RobotState(spec.robot_type, pos, vel))
        return states

    def initial_state(self) -> SimState:
        group_ids = {
            a.id: a.group_id for a in self.agents if a.group_id is not None
        }
        track = self.robot_track()
        return SimState(
            timestamp=0.0,
            agents=tuple(
                PedestrianAgent(
                    id=a.id,
                    position=a.position,
                    velocity=a.velocity,
                    goal=a.goal,
                    group_id=a.group_id,
                    behavior_mode=a.behavior,
                )
                for a in self.agents
            ),
            robot=track[0] if track else None,
            obstacles=self.obstacles,
            group_ids=group_ids or None,
        )


def _vec(value, where: str) -> Vec2:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ValueError(f"{where}: expected [x, y], got {value!r}")
    return Vec2(float(value[0]), float(value[1]))


def scenario_from_dict(data: dict) -> Scenario:
    known = {"dt", "horizon", "agents", "robot", "obstacles"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    agents = []
    for i, spec in enumerate(data.get("agents", [])):
        agents.append(
            AgentSpec(
                id=int(spec.get("id", i + 1)),
                position=_vec(spec["position"], f"agents[{i}].position"),
                goal=_vec(spec["goal"], f"agents[{i}].goal"),
                velocity=_vec(spec.get("velocity", [0.0, 0.0]), f"agents[{i}].velocity"),
                group_id=int(spec["group"]) if "group" in spec else None,
                behavior=BehaviorLabel(spec.get("behavior", "neutral")),
            )
        )
    if not agents:
        raise ValueError("scenario defines no agents")
    ids = [a.id for a in agents]
    if len(ids) != len(set(ids)):
        raise ValueError("agent ids must be unique")

    robot = None
    if "robot" in data:
        spec = data["robot"]
        track = None
        if "track" in spec:
            track = tuple(_vec(p, "robot.track") for p in spec["track"])
        robot = RobotSpec(
            robot_type=RobotType(spec.get("type", "Go1")),
            start=_vec(spec.get("start", spec.get("track", [[0, 0]])[0]), "robot.start"),
            velocity=_vec(spec.get("velocity", [0.0, 0.0]), "robot.velocity"),
            track=track,
        )

    segments = []
    for i, obs in enumerate(data.get("obstacles", [])):
        seg = obs["segment"]
        segments.append(
            (_vec(seg[0], f"obstacles[{i}]"), _vec(seg[1], f"obstacles[{i}]"))
        )

    return Scenario(
        agents=tuple(agents),
        robot=robot,
        obstacles=ObstacleSet(tuple(segments)),
        dt=float(data.get("dt", DEFAULT_DT)),
        horizon=int(data.get("horizon", 75)),
    )


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        return scenario_from_dict(tomllib.load(fh))
