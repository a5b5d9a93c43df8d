import math

import pytest

from robosfm.geometry import Trajectory, TrajectoryFrame, Vec2

DT = 1.0 / 15.0


def make_traj(positions, dt=DT, ped_id=1, start_index=0, t0=0.0, indices=None):
    """Trajectory from a list of (x, y) at a fixed rate."""
    frames = []
    for k, (x, y) in enumerate(positions):
        idx = indices[k] if indices is not None else start_index + k
        frames.append(
            TrajectoryFrame(idx, t0 + (idx - start_index) * dt, Vec2(x, y))
        )
    return Trajectory(ped_id, tuple(frames))


def rotate(p: Vec2, theta: float, about: Vec2 = Vec2(0.0, 0.0)) -> Vec2:
    return about + (p - about).rotated(theta)


@pytest.fixture
def straight_traj():
    # 60 frames east at 1.5 m/s: passes every quality filter
    return make_traj([(0.1 * k, 0.0) for k in range(60)])
