import math

import pytest

from robosfm.geometry import Trajectory, arc_length
from robosfm.preprocess import (
    FilterConfig,
    Rejection,
    passes_filters,
    repair_gaps,
    run_pipeline,
)

from conftest import DT, make_traj

CFG = FilterConfig()


def fixture_min_frames():
    # 9 frames: one short of the minimum
    return make_traj([(0.1 * k, 0.0) for k in range(9)], ped_id=10)


def fixture_teleport():
    # a one-frame gap spanning 0.5 m: 3.75 m/s implied across the gap
    pts = [(0.1 * k, 0.0) for k in range(6)]
    pts.append((pts[-1][0] + 0.5, 0.0))
    indices = list(range(6)) + [7]
    return make_traj(pts, ped_id=11, indices=indices)


def fixture_arc_length():
    # 12 frames at walking speed: arc 1.65 m < 3.5 m
    return make_traj([(0.15 * k, 0.0) for k in range(12)], ped_id=12)


def fixture_speed():
    # contiguous frames, one 0.2 m step (3.0 m/s) in an otherwise clean walk
    pts = [(0.1 * k, 0.0) for k in range(30)]
    shifted = [(x + 0.1, y) for x, y in pts[15:]]
    return make_traj(pts[:15] + shifted, ped_id=13)


def fixture_loop():
    # closed 2x2 square: net displacement ~0, arc 8 m
    pts = []
    for k in range(20):
        pts.append((0.1 * k, 0.0))
    for k in range(20):
        pts.append((2.0, 0.1 * k))
    for k in range(20):
        pts.append((2.0 - 0.1 * k, 2.0))
    for k in range(21):
        pts.append((0.0, 2.0 - 0.1 * k))
    return make_traj(pts, ped_id=14)


def fixture_stationary():
    # zigzag confined to a <1 m disc with arc >= 3.5 and net/arc >= 0.25
    pts = []
    for k in range(41):
        x = -0.9 + 0.045 * k
        y = 0.08 if k % 2 else 0.0
        pts.append((x, y))
    return make_traj(pts, ped_id=15)


def fixture_clean():
    return make_traj([(0.1 * k, 0.0) for k in range(60)], ped_id=16)


class TestRepairGaps:
    def test_midpoint_interpolation(self):
        traj = make_traj([(0.0, 0.0), (0.2, 0.0)], indices=[0, 2])
        repaired = repair_gaps(traj, CFG)
        assert isinstance(repaired, Trajectory)
        assert len(repaired) == 3
        mid = repaired.frames[1]
        assert mid.frame_index == 1
        assert math.isclose(mid.position.x, 0.1)
        assert math.isclose(mid.position.y, 0.0)
        assert math.isclose(mid.timestamp, DT, rel_tol=1e-9)

    def test_gapless_overspeed_rejected(self):
        traj = make_traj([(0.0, 0.0), (0.5, 0.0)])  # 7.5 m/s
        result = repair_gaps(traj, CFG)
        assert isinstance(result, Rejection)
        assert result.reason == "speed"

    def test_gap_overspeed_is_teleport(self):
        result = repair_gaps(fixture_teleport(), CFG)
        assert isinstance(result, Rejection)
        assert result.reason == "teleport"

    def test_no_gaps_identity(self):
        traj = fixture_clean()
        assert repair_gaps(traj, CFG) is traj

    def test_long_gap_rejected(self):
        traj = make_traj(
            [(0.0, 0.0), (0.6, 0.0)], indices=[0, 7]
        )  # 6 missing frames at feasible speed
        result = repair_gaps(traj, CFG)
        assert isinstance(result, Rejection)
        assert result.reason == "teleport"

    def test_observed_positions_untouched(self):
        traj = make_traj(
            [(0.0, 0.0), (0.1, 0.05), (0.3, 0.1)], indices=[0, 1, 3]
        )
        repaired = repair_gaps(traj, CFG)
        originals = {f.frame_index: f.position for f in traj.frames}
        for frame in repaired.frames:
            if frame.frame_index in originals:
                assert frame.position == originals[frame.frame_index]


class TestPassesFilters:
    def test_nine_frames_min_frames(self):
        ok, reason = passes_filters(fixture_min_frames(), CFG)
        assert (ok, reason) == (False, "min_frames")

    def test_ten_frames_not_min_frames(self):
        traj = make_traj([(0.1 * k, 0.0) for k in range(10)])
        ok, reason = passes_filters(traj, CFG)
        assert reason != "min_frames"

    def test_clean_walk_passes(self):
        # straight 4 m walk at 1.4 m/s over 43+ frames
        traj = make_traj([(1.4 * DT * k, 0.0) for k in range(44)])
        assert arc_length(traj) >= 3.5
        assert passes_filters(traj, CFG) == (True, None)

    def test_arc_length_boundary(self):
        def straight(total, n=46):
            step = total / (n - 1)
            return make_traj([(step * k, 0.0) for k in range(n)])

        assert passes_filters(straight(3.49), CFG) == (False, "arc_length")
        ok, _ = passes_filters(straight(3.51), CFG)
        assert ok

    def test_speed_boundary(self):
        def const_speed(v, n=40):
            return make_traj([(v * DT * k, 0.0) for k in range(n)])

        ok, _ = passes_filters(const_speed(2.69), CFG)
        assert ok
        assert passes_filters(const_speed(2.71), CFG) == (False, "speed")

    def test_closed_loop(self):
        ok, reason = passes_filters(fixture_loop(), CFG)
        assert (ok, reason) == (False, "loop")

    def test_stationary_zigzag(self):
        traj = fixture_stationary()
        assert arc_length(traj) >= 3.5  # fixture sanity
        ok, reason = passes_filters(traj, CFG)
        assert (ok, reason) == (False, "stationary")


class TestRunPipeline:
    def test_empty_input(self):
        kept, report = run_pipeline([], CFG)
        assert kept == []
        assert report.input_count == 0
        assert report.consistent()

    def test_one_fixture_per_rule(self):
        trajs = [
            fixture_min_frames(),
            fixture_teleport(),
            fixture_arc_length(),
            fixture_speed(),
            fixture_loop(),
            fixture_stationary(),
            fixture_clean(),
        ]
        kept, report = run_pipeline(trajs, CFG)
        assert [t.pedestrian_id for t in kept] == [16]
        for reason in ("min_frames", "teleport", "arc_length", "speed",
                       "loop", "stationary"):
            assert report.rejections[reason] == 1, reason
        assert report.consistent()

    def test_all_clean_kept(self):
        trajs = [fixture_clean() for _ in range(5)]
        kept, report = run_pipeline(trajs, CFG)
        assert report.kept_count == report.input_count == 5
        assert len(kept) == 5

    def test_idempotent(self):
        trajs = [
            fixture_clean(),
            make_traj([(1.2 * DT * k, 0.3 * math.sin(0.1 * k)) for k in range(70)]),
        ]
        kept, _ = run_pipeline(trajs, CFG)
        kept_again, report = run_pipeline(kept, CFG)
        assert report.kept_count == len(kept)
        assert [t.pedestrian_id for t in kept_again] == [t.pedestrian_id for t in kept]

    def test_kept_satisfy_all_rules_when_rechecked(self):
        trajs = [
            fixture_clean(),
            make_traj([(0.0, 0.0)] + [(0.1 * k, 0.0) for k in range(1, 61)],
                      indices=[0] + list(range(2, 62)), ped_id=2),
        ]
        kept, _ = run_pipeline(trajs, CFG)
        assert kept
        for traj in kept:
            assert passes_filters(traj, CFG) == (True, None)

    def test_interpolated_frames_counted(self):
        traj = make_traj(
            [(0.1 * k, 0.0) for k in range(30)] + [(3.05, 0.0)],
            indices=list(range(30)) + [31],
        )
        _, report = run_pipeline([traj], CFG)
        assert report.interpolated_frame_count == 1
