"""Displacement errors, speed distributions, and rank statistics.

ADE is the mean per-frame Euclidean error of a prediction, FDE the error
at the final frame.  Distribution comparisons use the Mann-Whitney U
test with midrank ties and Cliff's delta as the effect size; |delta|
above 0.474 counts as a large effect.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from robosfm.geometry import Trajectory, Vec2
from robosfm.records import SceneFrame

LARGE_EFFECT_THRESHOLD = 0.474
SPEED_RANGE_MAX = 2.7  # m/s, histogram coverage matches the walking cap
EXACT_PAIR_LIMIT = 10**6  # below this, U comes from direct pair counting


def ade(pred: Trajectory, gt: Trajectory) -> float:
    """Mean Euclidean distance between aligned frames."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gt)} frames")
    return sum(
        (p.position - g.position).norm() for p, g in zip(pred.frames, gt.frames)
    ) / len(pred)


def fde(pred: Trajectory, gt: Trajectory) -> float:
    """Euclidean distance between the final frames."""
    return (pred.frames[-1].position - gt.frames[-1].position).norm()


@dataclass(frozen=True)
class SpeedHistogram:
    bins: tuple[tuple[float, float, int], ...]  # (low, high, count)
    median: float

    def to_csv(self) -> str:
        lines = ["bin_low,bin_high,count"]
        lines += [f"{lo:.6f},{hi:.6f},{count}" for lo, hi, count in self.bins]
        return "\n".join(lines) + "\n"


def instantaneous_speeds(trajs: Sequence[Trajectory]) -> list[float]:
    speeds = []
    for traj in trajs:
        for a, b in zip(traj.frames, traj.frames[1:]):
            speeds.append(
                (b.position - a.position).norm() / (b.timestamp - a.timestamp)
            )
    return speeds


def speed_histogram(
    trajs: Sequence[Trajectory], bin_width: float = 0.1
) -> SpeedHistogram:
    """Histogram of instantaneous speeds over [0, 2.7 + bin_width).

    Faster outliers land in the last bin; also reports the median speed.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    speeds = instantaneous_speeds(trajs)
    n_bins = max(1, math.ceil((SPEED_RANGE_MAX + bin_width) / bin_width))
    counts = [0] * n_bins
    for s in speeds:
        counts[min(int(s / bin_width), n_bins - 1)] += 1
    bins = tuple(
        (k * bin_width, (k + 1) * bin_width, counts[k]) for k in range(n_bins)
    )
    median = statistics.median(speeds) if speeds else 0.0
    return SpeedHistogram(bins=bins, median=median)


@dataclass(frozen=True)
class StatResult:
    u_statistic: float  # U of the first sample, midrank ties
    p_value: float  # two-sided, normal approximation with tie correction
    cliffs_delta: float

    @property
    def large_effect(self) -> bool:
        return abs(self.cliffs_delta) > LARGE_EFFECT_THRESHOLD


def _u_by_pairs(a: np.ndarray, b: np.ndarray) -> float:
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def _u_by_ranks(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled))
    ranks[order] = np.arange(1, len(pooled) + 1)
    # midranks for ties
    sorted_vals = pooled[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    r1 = ranks[: len(a)].sum()
    return float(len(a) * len(b) + len(a) * (len(a) + 1) / 2.0 - r1)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """Rank-sum test with midrank ties and a tie-corrected normal p-value.

    For sample products up to 10^6 the U statistic is counted exactly
    over all pairs; Cliff's delta comes from the same count either way.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)
    n1, n2 = len(xa), len(xb)
    if n1 * n2 <= EXACT_PAIR_LIMIT:
        u1 = _u_by_pairs(xa, xb)
    else:
        u1 = _u_by_ranks(xa, xb)
    delta = (2.0 * u1 - n1 * n2) / (n1 * n2)

    pooled = np.concatenate([xa, xb])
    n = n1 + n2
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float((tie_counts**3 - tie_counts).sum())
    sigma_sq = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma_sq <= 0:
        return StatResult(u_statistic=u1, p_value=1.0, cliffs_delta=delta)
    big_u = max(u1, n1 * n2 - u1)
    z = (big_u - n1 * n2 / 2.0 - 0.5) / math.sqrt(sigma_sq)
    p = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
    return StatResult(u_statistic=u1, p_value=p, cliffs_delta=delta)


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> float:
    """(#{a_i > b_j} - #{a_i < b_j}) / (|a| |b|)."""
    return mann_whitney_u(a, b).cliffs_delta


@dataclass(frozen=True)
class MetricResult:
    ade: float
    fde: float
    per_pedestrian: Mapping[int, tuple[float, float]]
    count: int


@dataclass(frozen=True)
class PredictionInstance:
    """One evaluation case: an observed prefix, its future ground truth,
    and the recorded context the prediction runs against."""

    observed: Trajectory
    ground_truth: Trajectory  # future horizon only, aligned with prediction
    scene_context: Optional[Sequence[SceneFrame]] = None
    goal: Optional[Vec2] = None


def evaluate_predictions(
    pairs: Sequence[tuple[Trajectory, Trajectory]]
) -> MetricResult:
    """Aggregate ADE/FDE over (prediction, ground-truth) pairs."""
    if not pairs:
        raise ValueError("nothing to evaluate")
    per_ped = {}
    for pred, gt in pairs:
        per_ped[pred.pedestrian_id] = (ade(pred, gt), fde(pred, gt))
    mean_ade = sum(v[0] for v in per_ped.values()) / len(per_ped)
    mean_fde = sum(v[1] for v in per_ped.values()) / len(per_ped)
    return MetricResult(
        ade=mean_ade, fde=mean_fde, per_pedestrian=per_ped, count=len(per_ped)
    )


def compare_providers(
    instances: Sequence[PredictionInstance],
    providers: Sequence,
    cfg,
) -> dict[str, MetricResult]:
    """One ADE/FDE row per provider over the same prediction instances.

    Uses best-of-``cfg.samples_k`` per instance; deterministic given the
    seed in ``cfg``.
    """
    from robosfm.simulate import best_of_k  # deferred: simulate uses ade()

    results = {}
    for provider in providers:
        pairs = []
        for inst in instances:
            pred, _ = best_of_k(
                inst.observed,
                inst.ground_truth,
                provider,
                cfg,
                scene_context=inst.scene_context,
                goal=inst.goal,
            )
            pairs.append((pred, inst.ground_truth))
        results[provider.tag] = evaluate_predictions(pairs)
    return results


def results_to_csv(results: Mapping[str, MetricResult]) -> str:
    lines = ["provider,ade,fde,count"]
    for tag, res in results.items():
        lines.append(f"{tag},{res.ade:.6f},{res.fde:.6f},{res.count}")
    return "\n".join(lines) + "\n"


def results_to_text(results: Mapping[str, MetricResult]) -> str:
    """Aligned plain-text table of provider metrics."""
    rows = [("provider", "ADE [m]", "FDE [m]", "count")]
    for tag, res in results.items():
        rows.append((tag, f"{res.ade:.4f}", f"{res.fde:.4f}", str(res.count)))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    out = []
    for i, row in enumerate(rows):
        out.append("  ".join(cell.ljust(widths[k]) for k, cell in enumerate(row)))
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"
