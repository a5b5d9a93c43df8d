import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robosfm.geometry import (
    ObstacleSet,
    Trajectory,
    TrajectoryFrame,
    Vec2,
    arc_length,
    finite_difference_velocity,
    nearest_obstacle_point,
)

from conftest import DT, make_traj, rotate


class TestVec2:
    def test_norm_and_normalize(self):
        assert Vec2(3.0, 4.0).norm() == 5.0
        n = Vec2(3.0, 4.0).normalized()
        assert math.isclose(n.x, 0.6) and math.isclose(n.y, 0.8)

    def test_normalize_rejects_near_zero(self):
        with pytest.raises(ValueError, match="normalize"):
            Vec2(0.0, 1e-13).normalized()

    def test_rotation_preserves_norm(self):
        v = Vec2(1.2, -0.7)
        assert math.isclose(v.rotated(1.1).norm(), v.norm())

    def test_cross_sign(self):
        assert Vec2(1, 0).cross(Vec2(0, 1)) == 1.0
        assert Vec2(0, 1).cross(Vec2(1, 0)) == -1.0


class TestTrajectoryInvariants:
    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one frame"):
            Trajectory(1, ())

    def test_nonincreasing_frames_rejected(self):
        frames = (
            TrajectoryFrame(0, 0.0, Vec2(0, 0)),
            TrajectoryFrame(0, DT, Vec2(1, 0)),
        )
        with pytest.raises(ValueError, match="frame indices"):
            Trajectory(1, frames)

    def test_nonincreasing_timestamps_rejected(self):
        frames = (
            TrajectoryFrame(0, 0.0, Vec2(0, 0)),
            TrajectoryFrame(1, 0.0, Vec2(1, 0)),
        )
        with pytest.raises(ValueError, match="timestamps"):
            Trajectory(1, frames)


class TestFiniteDifferenceVelocity:
    def test_linear_motion(self):
        traj = make_traj([(0.0, 0.0), (0.1, 0.0)])
        (v0, v1) = finite_difference_velocity(traj)
        assert math.isclose(v0.x, 1.5) and v0.y == 0.0
        assert v1 == v0  # last duplicates previous

    def test_constant_position(self):
        traj = make_traj([(1.0, 2.0), (1.0, 2.0)], indices=[0, 1])
        for v in finite_difference_velocity(traj):
            assert v.x == 0.0 and v.y == 0.0

    def test_hand_computed_three_frames(self):
        traj = make_traj([(0.0, 0.0), (0.1, 0.0), (0.1, 0.2)])
        vels = finite_difference_velocity(traj)
        expected = [(1.5, 0.0), (0.0, 3.0), (0.0, 3.0)]
        for v, (ex, ey) in zip(vels, expected):
            assert math.isclose(v.x, ex, abs_tol=1e-12)
            assert math.isclose(v.y, ey, abs_tol=1e-12)

    def test_single_frame_errors(self):
        traj = make_traj([(0.0, 0.0)])
        with pytest.raises(ValueError, match="insufficient frames"):
            finite_difference_velocity(traj)

    def test_translation_invariance(self):
        pts = [(0.1 * k, 0.05 * k * k) for k in range(6)]
        base = finite_difference_velocity(make_traj(pts))
        shifted = finite_difference_velocity(
            make_traj([(x + 5.0, y - 3.0) for x, y in pts])
        )
        for a, b in zip(base, shifted):
            assert math.isclose(a.x, b.x, abs_tol=1e-9)
            assert math.isclose(a.y, b.y, abs_tol=1e-9)


class TestArcLength:
    def test_single_frame_zero(self):
        assert arc_length(make_traj([(2.0, 3.0)])) == 0.0

    def test_three_four_five(self):
        assert math.isclose(arc_length(make_traj([(0, 0), (3, 4)])), 5.0)

    def test_unit_steps(self):
        traj = make_traj([(0, 0), (1, 0), (1, 1), (0, 1)])
        assert math.isclose(arc_length(traj), 3.0)

    @given(
        theta=st.floats(-math.pi, math.pi),
        tx=st.floats(-50, 50),
        ty=st.floats(-50, 50),
    )
    @settings(max_examples=50, deadline=None)
    def test_rigid_transform_invariance(self, theta, tx, ty):
        pts = [(0.3 * k, math.sin(k)) for k in range(8)]
        base = arc_length(make_traj(pts))
        moved = arc_length(
            make_traj(
                [
                    (
                        math.cos(theta) * x - math.sin(theta) * y + tx,
                        math.sin(theta) * x + math.cos(theta) * y + ty,
                    )
                    for x, y in pts
                ]
            )
        )
        assert math.isclose(base, moved, rel_tol=1e-9, abs_tol=1e-9)


class TestNearestObstaclePoint:
    def test_perpendicular_foot(self):
        obs = ObstacleSet(((Vec2(-1, 0), Vec2(1, 0)),))
        point, dist = nearest_obstacle_point(Vec2(0, 1), obs)
        assert point == Vec2(0.0, 0.0)
        assert math.isclose(dist, 1.0)

    def test_point_on_segment(self):
        obs = ObstacleSet(((Vec2(0, 0), Vec2(2, 0)),))
        point, dist = nearest_obstacle_point(Vec2(0.5, 0.0), obs)
        assert dist == 0.0
        assert point == Vec2(0.5, 0.0)

    def test_endpoint_clamp(self):
        obs = ObstacleSet(((Vec2(0, 0), Vec2(1, 0)),))
        point, dist = nearest_obstacle_point(Vec2(2, 2), obs)
        assert point == Vec2(1.0, 0.0)
        assert math.isclose(dist, math.sqrt(5.0))

    def test_degenerate_segment_is_point(self):
        obs = ObstacleSet(((Vec2(1, 1), Vec2(1, 1)),))
        point, dist = nearest_obstacle_point(Vec2(1, 3), obs)
        assert point == Vec2(1.0, 1.0)
        assert math.isclose(dist, 2.0)

    def test_tie_goes_to_lowest_index(self):
        obs = ObstacleSet(
            ((Vec2(0, 1), Vec2(1, 1)), (Vec2(0, -1), Vec2(1, -1)))
        )
        point, _ = nearest_obstacle_point(Vec2(0.5, 0.0), obs)
        assert point.y == 1.0

    def test_empty_set_errors(self):
        with pytest.raises(ValueError, match="no obstacles"):
            nearest_obstacle_point(Vec2(0, 0), ObstacleSet())

    def test_matches_dense_sampling_oracle(self):
        # brute force: minimum distance over densely sampled segment
        # points; the query point keeps a small standoff so the sampling
        # error stays below the 1e-6 comparison tolerance
        rng = np.random.default_rng(4)
        ts = np.linspace(0.0, 1.0, 30001)
        checked = 0
        while checked < 25:
            segs = []
            for _ in range(3):
                a = Vec2(*rng.uniform(-5, 5, 2))
                b = Vec2(*rng.uniform(-5, 5, 2))
                segs.append((a, b))
            obs = ObstacleSet(tuple(segs))
            p = Vec2(*rng.uniform(-5, 5, 2))
            _, dist = nearest_obstacle_point(p, obs)
            if dist < 0.05:
                continue
            brute = math.inf
            for a, b in segs:
                xs = a.x + (b.x - a.x) * ts
                ys = a.y + (b.y - a.y) * ts
                brute = min(
                    brute, float(np.min(np.hypot(xs - p.x, ys - p.y)))
                )
            assert abs(dist - brute) < 1e-6
            checked += 1
