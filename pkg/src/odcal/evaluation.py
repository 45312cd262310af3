"""Metrics, loss weights, congestion-stratified segment sets and reporting rows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .simulator import GroundTruth, SimulationResult, SimulatorConfig, replication_seeds, simulate_expected


@dataclass(frozen=True)
class SegmentSet:
    ids: tuple[str, ...]
    label: str = ""

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass
class MetricsReport:
    in_speed: float
    in_count: float
    out_speed: float | None = None
    out_count: float | None = None
    n_runs: int = 1
    per_run: list[dict] = field(default_factory=list)

    @property
    def has_out_of_sample(self) -> bool:
        return self.out_speed is not None

    def as_dict(self) -> dict:
        return {
            "in_speed": self.in_speed,
            "in_count": self.in_count,
            "out_speed": self.out_speed,
            "out_count": self.out_count,
        }


def segment_weight(v_gt, v_max):
    """min(v/v_max, 1 - v/v_max) with v clamped into [0, v_max]; lies in [0, 0.5]."""
    v_max = np.asarray(v_max, dtype=float)
    if np.any(v_max <= 0):
        raise ValueError("v_max must be positive")
    ratio = np.clip(v_gt, 0.0, v_max) / v_max
    return np.minimum(ratio, 1.0 - ratio)[()]


def gt_weights(net: Network, gt: GroundTruth) -> np.ndarray:
    """Per-segment loss weights in network order."""
    return segment_weight(gt.speeds_for(net), net.segment_array("v_max"))


def nrmse(sim, gt) -> float:
    """Root mean squared error divided by the mean of the GT values."""
    sim = np.asarray(sim, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if sim.shape != gt.shape or sim.ndim != 1:
        raise ValueError(f"shape mismatch: {sim.shape} vs {gt.shape}")
    if sim.size == 0:
        raise ValueError("nrmse of empty vectors")
    mean = gt.mean()
    if not mean > 0:
        raise ValueError(f"GT mean must be positive, got {mean}")
    return float(np.sqrt(np.mean((sim - gt) ** 2)) / mean)


def select_segments_by_congestion(gt: GroundTruth, net: Network, threshold: float) -> SegmentSet:
    """Routed segments whose GT speed / speed limit is at most ``threshold``, sorted by id."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    v_max = net.segment_array("v_max")
    ratio = np.clip(gt.speeds_for(net), 0.0, v_max) / v_max
    keep = (ratio <= threshold) & net.routed_mask()
    ids = sorted(s for s, k in zip(net.segment_ids, keep) if k)
    return SegmentSet(tuple(ids), f"congested-{threshold:g}")


def complement_set(gt: GroundTruth, net: Network, in_set: SegmentSet) -> SegmentSet:
    """All routed GT segments not in ``in_set``."""
    inside = set(in_set.ids)
    gt_ids = set(gt.segment_ids)
    ids = sorted(s for s, k in zip(net.segment_ids, net.routed_mask()) if k and s in gt_ids and s not in inside)
    return SegmentSet(tuple(ids), f"{in_set.label}-out")


def set_metrics(net: Network, res: SimulationResult, gt: GroundTruth, in_set, out_set) -> MetricsReport:
    v_gt, q_gt = gt.speeds_for(net), gt.counts_for(net)
    idx = net.indices(in_set)
    report = MetricsReport(nrmse(res.speeds[idx], v_gt[idx]), nrmse(res.counts[idx], q_gt[idx]))
    if len(out_set):
        idx = net.indices(out_set)
        report.out_speed = nrmse(res.speeds[idx], v_gt[idx])
        report.out_count = nrmse(res.counts[idx], q_gt[idx])
    return report


def evaluate_demands(net: Network, x, gt: GroundTruth, in_set, out_set=(), n_reps: int = 5, seed: int = 0,
                     cfg: SimulatorConfig = SimulatorConfig()) -> MetricsReport:
    """nRMSE of speeds and counts for ``x`` averaged over ``n_reps`` fresh replications."""
    if not len(in_set):
        raise ValueError("in-sample segment set is empty")
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    res = simulate_expected(net, x, replication_seeds(seed, n_reps, "eval"), cfg)
    return set_metrics(net, res, gt, in_set, out_set)


def average_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Run-mean of several reports; per-run values are retained."""
    def mean(key):
        vals = [getattr(r, key) for r in reports]
        return None if vals[0] is None else float(np.mean(vals))

    return MetricsReport(mean("in_speed"), mean("in_count"), mean("out_speed"), mean("out_count"),
                         n_runs=len(reports), per_run=[r.as_dict() for r in reports])


def scatter_export(runs: list[SimulationResult], gt: GroundTruth, net: Network, segment_set) -> list[dict]:
    """Per-segment GT speed, mean simulated speed over runs and its sample std (n-1)."""
    if not runs:
        raise ValueError("scatter_export needs at least one run")
    speeds = np.array([r.speeds for r in runs])
    v_gt = gt.speeds_for(net)
    rows = []
    for sid in segment_set:
        i = net.segment_index(sid)
        col = speeds[:, i]
        std = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
        rows.append({"segment_id": sid, "gt_speed": float(v_gt[i]), "sim_speed_mean": float(col.mean()),
                     "sim_speed_std": std})
    return rows
