import dataclasses
import math

import numpy as np
import pytest

from robosfm.behavior import BehaviorLabel
from robosfm.forces import (
    CoincidentAgentsWarning,
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
from robosfm.geometry import ObstacleSet, Vec2
from robosfm.records import RobotState, RobotType, SceneFrame

PARAMS = SfmParams()
QUIET = dataclasses.replace(PARAMS, noise_std=0.0)


def agent_at(x=0.0, y=0.0, vx=0.0, vy=0.0, gx=10.0, gy=0.0, **kw):
    return PedestrianAgent(
        id=1, position=Vec2(x, y), velocity=Vec2(vx, vy), goal=Vec2(gx, gy), **kw
    )


def still_robot(x, y):
    return RobotState(RobotType.GO1, Vec2(x, y), Vec2(0.0, 0.0))


def moving_robot(x, y):
    return RobotState(RobotType.GO1, Vec2(x, y), Vec2(0.5, 0.0))


class TestGoalForce:
    def test_equilibrium(self):
        v = PARAMS.desired_speed
        f = goal_force(agent_at(vx=v), PARAMS)
        assert abs(f.x) < 1e-12 and abs(f.y) < 1e-12

    def test_at_rest_east(self):
        f = goal_force(agent_at(), PARAMS)
        assert math.isclose(f.x, 2.68)  # 1.34 / 0.5
        assert f.y == 0.0

    def test_agent_on_goal_brakes(self):
        f = goal_force(agent_at(x=10.0, vx=1.0), PARAMS)
        assert math.isclose(f.x, -2.0)  # -v / tau

    def test_rotational_equivariance(self):
        theta = 0.7
        base = goal_force(agent_at(vx=0.4, vy=0.1), PARAMS)
        rotated = goal_force(
            PedestrianAgent(
                id=1,
                position=Vec2(0, 0),
                velocity=Vec2(0.4, 0.1).rotated(theta),
                goal=Vec2(10, 0).rotated(theta),
            ),
            PARAMS,
        )
        expected = base.rotated(theta)
        assert math.isclose(rotated.x, expected.x, abs_tol=1e-12)
        assert math.isclose(rotated.y, expected.y, abs_tol=1e-12)


class TestPedestrianRepulsion:
    def test_no_others(self):
        assert pedestrian_repulsion(agent_at(vx=1.0), [], PARAMS) == Vec2(0.0, 0.0)

    def test_neighbor_east_pushes_west(self):
        # walking north so the neighbor is abeam (no head-on tie-break)
        f = pedestrian_repulsion(
            agent_at(vx=0.0, vy=1.0, gx=0.0, gy=10.0), [Vec2(1.5, 0.0)], PARAMS
        )
        assert f.x < 0
        assert abs(f.y) < 1e-12

    def test_in_view_magnitude_at_two_meters(self):
        # frozen oracle: (2.1 / 0.3) * exp(-2 / 0.3)
        f = pedestrian_repulsion(
            agent_at(vx=0.0, vy=1.0, gx=0.0, gy=10.0), [Vec2(2.0, 0.0)], PARAMS
        )
        assert math.isclose(f.norm(), 0.008908436609378656, rel_tol=1e-12)

    def test_out_of_view_downweighted(self):
        ahead = pedestrian_repulsion(
            agent_at(vy=1.0, gx=0.0, gy=10.0), [Vec2(0.0, 2.0)], QUIET
        )
        behind = pedestrian_repulsion(
            agent_at(vy=1.0, gx=0.0, gy=10.0), [Vec2(0.0, -2.0)], QUIET
        )
        assert math.isclose(behind.norm(), PARAMS.fov_weight * ahead.norm())

    def test_coincident_pair_skipped_with_warning(self):
        with pytest.warns(CoincidentAgentsWarning):
            f = pedestrian_repulsion(agent_at(vx=1.0), [Vec2(0.0, 0.0)], PARAMS)
        assert f == Vec2(0.0, 0.0)

    def test_magnitude_strictly_decreasing(self):
        agent = agent_at(vx=0.0, vy=1.0, gx=0.0, gy=10.0)
        mags = [
            pedestrian_repulsion(agent, [Vec2(b, 0.0)], PARAMS).norm()
            for b in np.linspace(0.2, 4.0, 30)
        ]
        assert all(a > b for a, b in zip(mags, mags[1:]))

    def test_matches_potential_gradient(self):
        rng = np.random.default_rng(21)
        params = PARAMS
        h = 1e-6
        for _ in range(60):
            heading = float(rng.uniform(-math.pi, math.pi))
            bearing = heading + float(rng.uniform(0.26, 1.48))  # in view, off-axis
            b = float(rng.uniform(0.3, 3.5))
            pos = Vec2(*rng.uniform(-3, 3, 2))
            other = pos + Vec2(math.cos(bearing), math.sin(bearing)) * b
            vel = Vec2(math.cos(heading), math.sin(heading)) * 1.2
            goal = pos + vel * 10.0

            def potential(p):
                return params.ped_amplitude * math.exp(
                    -(p - other).norm() / params.ped_range
                )

            agent = PedestrianAgent(id=1, position=pos, velocity=vel, goal=goal)
            f = pedestrian_repulsion(agent, [other], params)
            gx = (potential(pos + Vec2(h, 0)) - potential(pos - Vec2(h, 0))) / (2 * h)
            gy = (potential(pos + Vec2(0, h)) - potential(pos - Vec2(0, h))) / (2 * h)
            err = (f + Vec2(gx, gy)).norm()
            assert err <= 1e-5 * max(f.norm(), 1e-12)


class TestObstacleRepulsion:
    def test_far_wall_negligible(self):
        obs = ObstacleSet(((Vec2(-10, -8), Vec2(10, -8)),))
        f = obstacle_repulsion(agent_at(vx=1.0), obs, PARAMS)
        assert f.norm() < 1e-8

    def test_between_parallel_walls_net_zero(self):
        obs = ObstacleSet(
            ((Vec2(-10, -1), Vec2(10, -1)), (Vec2(-10, 1), Vec2(10, 1)))
        )
        f = obstacle_repulsion(agent_at(vx=1.0), obs, PARAMS)
        assert f == Vec2(0.0, 0.0)

    def test_empty_set_zero(self):
        assert obstacle_repulsion(agent_at(vx=1.0), ObstacleSet(), PARAMS) == Vec2(0, 0)

    def test_matches_potential_gradient(self):
        rng = np.random.default_rng(22)
        h = 1e-6
        checked = 0
        while checked < 60:
            a = Vec2(*rng.uniform(-4, 4, 2))
            b = Vec2(*rng.uniform(-4, 4, 2))
            obs = ObstacleSet(((a, b),))
            pos = Vec2(*rng.uniform(-4, 4, 2))
            from robosfm.geometry import nearest_obstacle_point

            _, dist = nearest_obstacle_point(pos, obs)
            if dist < 0.1:
                continue

            def potential(p):
                _, d = nearest_obstacle_point(p, obs)
                return PARAMS.obs_amplitude * math.exp(-d / PARAMS.obs_range)

            f = obstacle_repulsion(agent_at(x=pos.x, y=pos.y, vx=1.0), obs, PARAMS)
            gx = (potential(pos + Vec2(h, 0)) - potential(pos - Vec2(h, 0))) / (2 * h)
            gy = (potential(pos + Vec2(0, h)) - potential(pos - Vec2(0, h))) / (2 * h)
            err = (f + Vec2(gx, gy)).norm()
            assert err <= 1e-5 * max(f.norm(), 1e-12)
            checked += 1


class TestRobotRepulsion:
    def test_far_robot_negligible(self):
        f = robot_repulsion(agent_at(vx=1.0), still_robot(50.0, 0.0), PARAMS)
        assert f.norm() < 1e-10

    def test_robot_north_pushes_south(self):
        f = robot_repulsion(
            agent_at(vx=1.0), still_robot(0.0, 2.0), PARAMS
        )
        assert f.y < 0
        assert abs(f.x) < 1e-12

    def test_moving_amplitude_exceeds_stationary(self):
        agent = agent_at(vx=1.0)
        f_still = robot_repulsion(agent, still_robot(0.0, 2.0), PARAMS)
        f_moving = robot_repulsion(agent, moving_robot(0.0, 2.0), PARAMS)
        ratio = f_moving.norm() / f_still.norm()
        assert ratio > 1.0
        assert math.isclose(
            ratio,
            PARAMS.robot_amplitude_moving / PARAMS.robot_amplitude_stationary,
        )

    def test_singularity_capped(self):
        f = robot_repulsion(agent_at(vx=1.0), still_robot(1e-9, 0.0), PARAMS)
        assert math.isclose(f.norm(), PARAMS.robot_amplitude_stationary)

    def test_matches_potential_gradient(self):
        rng = np.random.default_rng(23)
        h = 1e-6
        for _ in range(60):
            heading = float(rng.uniform(-math.pi, math.pi))
            bearing = heading + float(rng.uniform(0.26, 2.8))
            b = float(rng.uniform(0.3, 4.0))
            pos = Vec2(*rng.uniform(-3, 3, 2))
            robot_pos = pos + Vec2(math.cos(bearing), math.sin(bearing)) * b
            moving = bool(rng.integers(0, 2))
            robot = RobotState(
                RobotType.GO1, robot_pos,
                Vec2(0.5, 0.0) if moving else Vec2(0.0, 0.0),
            )
            amp = (
                PARAMS.robot_amplitude_moving
                if moving
                else PARAMS.robot_amplitude_stationary
            )

            def potential(p):
                return (
                    amp
                    * PARAMS.robot_range
                    * math.exp(-(p - robot_pos).norm() / PARAMS.robot_range)
                )

            vel = Vec2(math.cos(heading), math.sin(heading)) * 1.2
            agent = PedestrianAgent(id=1, position=pos, velocity=vel, goal=pos + vel * 9)
            f = robot_repulsion(agent, robot, PARAMS)
            gx = (potential(pos + Vec2(h, 0)) - potential(pos - Vec2(h, 0))) / (2 * h)
            gy = (potential(pos + Vec2(0, h)) - potential(pos - Vec2(0, h))) / (2 * h)
            err = (f + Vec2(gx, gy)).norm()
            assert err <= 1e-5 * max(f.norm(), 1e-12)


class TestGroupForce:
    def test_at_centroid(self):
        members = [Vec2(-1.0, 0.0), Vec2(1.0, 0.0)]
        f = group_force(agent_at(), members, PARAMS)
        assert f == Vec2(0.0, 0.0)

    def test_linear_law_at_three_meters(self):
        # centroid of agent at origin plus two members at (4.5, 0) is 3 m out
        members = [Vec2(4.5, 0.0), Vec2(4.5, 0.0)]
        params = dataclasses.replace(PARAMS, group_gain=1.0, group_threshold=1.5)
        f = group_force(agent_at(), members, params)
        assert math.isclose(f.norm(), 1.5, rel_tol=1e-12)
        assert f.x > 0  # toward the centroid

    def test_dead_zone(self):
        members = [Vec2(2.0, 0.0)]  # centroid 1 m away < 1.5 m threshold
        assert group_force(agent_at(), members, PARAMS) == Vec2(0.0, 0.0)

    def test_singleton_group(self):
        assert group_force(agent_at(), [], PARAMS) == Vec2(0.0, 0.0)


def full_scene(agent, others=(), robot=None, obstacles=ObstacleSet(), group_ids=None):
    peds = [(agent.id, agent.position, agent.velocity)]
    peds += [(i + 2, pos, Vec2(0.0, 0.0)) for i, pos in enumerate(others)]
    return SceneFrame(
        timestamp=0.0, pedestrians=tuple(peds), robot=robot,
        obstacles=obstacles, group_ids=group_ids,
    )


class TestTotalForce:
    def test_classical_reduction_no_robot_no_group(self):
        agent = agent_at(vx=1.0)
        others = [Vec2(2.0, 1.0)]
        obs = ObstacleSet(((Vec2(-5, -2), Vec2(5, -2)),))
        bd = total_force(agent, full_scene(agent, others, obstacles=obs), QUIET)
        f_a = goal_force(agent, QUIET)
        f_p = pedestrian_repulsion(agent, others, QUIET)
        f_o = obstacle_repulsion(agent, obs, QUIET)
        expected = f_a + f_o + f_p
        assert bd.f_r == Vec2(0.0, 0.0)
        assert bd.f_gr == Vec2(0.0, 0.0)
        assert math.isclose(bd.total.x, expected.x, abs_tol=1e-15)
        assert math.isclose(bd.total.y, expected.y, abs_tol=1e-15)

    def test_zero_amplitudes_keep_classical_with_avoidance(self):
        params = dataclasses.replace(
            QUIET, robot_amplitude_stationary=0.0, robot_amplitude_moving=0.0
        )
        agent = agent_at(vx=1.0, behavior_mode=BehaviorLabel.AVOIDANCE)
        scene = full_scene(agent, [Vec2(3.0, 0.5)], robot=still_robot(2.0, 2.0))
        bd = total_force(agent, scene, params)
        assert bd.f_r == Vec2(0.0, 0.0)

    def test_breakdown_sums_exactly(self):
        agent = agent_at(vx=1.0, group_id=1, behavior_mode=BehaviorLabel.AVOIDANCE)
        scene = full_scene(
            agent, [Vec2(1.5, 0.8)], robot=still_robot(3.0, -1.0),
            obstacles=ObstacleSet(((Vec2(-5, 3), Vec2(5, 3)),)),
            group_ids={1: 1, 2: 1},
        )
        bd = total_force(agent, scene, QUIET, rng_seed=5)
        manual = bd.f_a + bd.f_o + bd.f_p + bd.f_r + bd.f_gr + bd.noise
        assert bd.total == manual

    def test_fixed_seed_reproducible(self):
        agent = agent_at(vx=1.0)
        scene = full_scene(agent)
        a = total_force(agent, scene, PARAMS, rng_seed=123)
        b = total_force(agent, scene, PARAMS, rng_seed=123)
        assert a.noise == b.noise
        assert a.total == b.total

    def test_neutral_treats_robot_as_point_obstacle(self):
        agent = agent_at(vx=1.0, behavior_mode=BehaviorLabel.NEUTRAL)
        robot = still_robot(0.0, 1.0)
        bd = total_force(agent, full_scene(agent, robot=robot), QUIET)
        expected_mag = (QUIET.obs_amplitude / QUIET.obs_range) * math.exp(
            -1.0 / QUIET.obs_range
        )
        assert math.isclose(bd.f_r.norm(), expected_mag, rel_tol=1e-12)
        assert bd.f_r.y < 0

    def test_avoidance_uses_robot_repulsion(self):
        agent = agent_at(vx=1.0, behavior_mode=BehaviorLabel.AVOIDANCE)
        robot = still_robot(0.0, 1.0)
        bd = total_force(agent, full_scene(agent, robot=robot), QUIET)
        expected = robot_repulsion(agent, robot, QUIET)
        assert bd.f_r == expected

    def test_attraction_switch_targets_robot(self):
        agent = agent_at(
            vx=1.0,
            behavior_mode=BehaviorLabel.ATTRACTION,
            goal_switch_remaining=2.0,
        )
        robot = still_robot(4.0, 4.0)
        bd = total_force(agent, full_scene(agent, robot=robot), QUIET)
        assert bd.f_r == Vec2(0.0, 0.0)
        switched = dataclasses.replace(agent, goal=robot.position)
        expected = goal_force(switched, QUIET)
        assert math.isclose(bd.f_a.x, expected.x, abs_tol=1e-15)
        assert math.isclose(bd.f_a.y, expected.y, abs_tol=1e-15)

    def test_rigid_transform_equivariance(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            theta = float(rng.uniform(-math.pi, math.pi))
            shift = Vec2(*rng.uniform(-5, 5, 2))

            def move(p):
                return p.rotated(theta) + shift

            def turn(v):
                return v.rotated(theta)

            agent = PedestrianAgent(
                id=1, position=Vec2(*rng.uniform(-2, 2, 2)),
                velocity=Vec2(*rng.uniform(-1, 1, 2)),
                goal=Vec2(*rng.uniform(3, 6, 2)),
                group_id=1, behavior_mode=BehaviorLabel.AVOIDANCE,
            )
            others = [Vec2(*rng.uniform(-3, 3, 2)) for _ in range(2)]
            wall = (Vec2(*rng.uniform(-6, 6, 2)), Vec2(*rng.uniform(-6, 6, 2)))
            robot = RobotState(
                RobotType.GO1, Vec2(*rng.uniform(-3, 3, 2)), Vec2(0.3, 0.1)
            )
            scene = SceneFrame(
                timestamp=0.0,
                pedestrians=(
                    (1, agent.position, agent.velocity),
                    (2, others[0], Vec2(0, 0)),
                    (3, others[1], Vec2(0, 0)),
                ),
                robot=robot,
                obstacles=ObstacleSet((wall,)),
                group_ids={1: 1, 2: 1},
            )
            bd = total_force(agent, scene, QUIET)

            agent_m = PedestrianAgent(
                id=1, position=move(agent.position), velocity=turn(agent.velocity),
                goal=move(agent.goal), group_id=1,
                behavior_mode=BehaviorLabel.AVOIDANCE,
            )
            scene_m = SceneFrame(
                timestamp=0.0,
                pedestrians=(
                    (1, agent_m.position, agent_m.velocity),
                    (2, move(others[0]), Vec2(0, 0)),
                    (3, move(others[1]), Vec2(0, 0)),
                ),
                robot=RobotState(RobotType.GO1, move(robot.position), turn(robot.velocity)),
                obstacles=ObstacleSet(((move(wall[0]), move(wall[1])),)),
                group_ids={1: 1, 2: 1},
            )
            bd_m = total_force(agent_m, scene_m, QUIET)
            for name in ("f_a", "f_o", "f_p", "f_r", "f_gr", "total"):
                expected = turn(getattr(bd, name))
                got = getattr(bd_m, name)
                assert math.isclose(got.x, expected.x, abs_tol=1e-9), name
                assert math.isclose(got.y, expected.y, abs_tol=1e-9), name


class TestSfmParamsValidation:
    def test_moving_at_least_stationary(self):
        with pytest.raises(ValueError, match="moving"):
            SfmParams(robot_amplitude_moving=1.0, robot_amplitude_stationary=2.0)

    def test_fov_weight_range(self):
        with pytest.raises(ValueError, match="fov_weight"):
            SfmParams(fov_weight=1.5)
