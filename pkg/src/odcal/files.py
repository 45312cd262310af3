"""Comma-separated readers and writers for every persisted artifact.

Floats are written with ``repr`` so each file round-trips exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metamodel import MetamodelParams
from .simulator import GroundTruth
from .solvers import CalibrationTrace, TraceRecord


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return rows[0], rows[1:]


def write_demand(path, x) -> None:
    write_rows(path, ["od_id", "demand_vph"], [(z + 1, float(v)) for z, v in enumerate(x)])


def read_demand(path) -> np.ndarray:
    header, rows = read_rows(path)
    if header != ["od_id", "demand_vph"]:
        raise ValueError(f"{path}: unexpected header {header}")
    ids = [int(r[0]) for r in rows]
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"{path}: OD ids must be contiguous from 1")
    return np.array([float(r[1]) for r in rows])


def write_ground_truth(path, gt: GroundTruth) -> None:
    n = gt.n_replications
    header = ["segment_id", "gt_speed_ms", "gt_count_vph"] + [f"rep_{k + 1}_speed" for k in range(n)]
    rows = [[sid, float(gt.gt_speed[i]), float(gt.gt_count[i]), *map(float, gt.rep_speeds[:, i])]
            for i, sid in enumerate(gt.segment_ids)]
    write_rows(path, header, rows)


def read_ground_truth(path) -> GroundTruth:
    """GroundTruth without the GT demand, which is never stored with the table."""
    header, rows = read_rows(path)
    if header[:3] != ["segment_id", "gt_speed_ms", "gt_count_vph"]:
        raise ValueError(f"{path}: unexpected header {header[:3]}")
    n_reps = len(header) - 3
    if n_reps < 1:
        raise ValueError(f"{path}: no replication columns")
    ids = [r[0] for r in rows]
    data = np.array([[float(v) for v in r[1:]] for r in rows])
    return GroundTruth(ids, data[:, 0], data[:, 1], data[:, 2:].T.copy())


def write_trace(path, trace: CalibrationTrace) -> None:
    n = trace.records[0].x.size if trace.records else 0
    header = ["epoch", "consumed", "candidate_loss", "accepted", "best_loss"] + [f"x_{z + 1}" for z in range(n)]
    rows = [[r.epoch, r.consumed, r.loss, r.accepted, r.best_loss, *map(float, r.x)] for r in trace.records]
    write_rows(path, header, rows)


def read_trace(path, algorithm: str = "") -> CalibrationTrace:
    _, rows = read_rows(path)
    trace = CalibrationTrace(algorithm)
    for r in rows:
        x = np.array([float(v) for v in r[5:]])
        rec = TraceRecord(int(r[0]), int(r[1]), x, float(r[2]), r[3] == "1", float(r[4]))
        trace.records.append(rec)
        if rec.accepted:
            trace.best_x, trace.best_loss = x, rec.loss
    return trace


def write_beta_snapshots(path, trace: CalibrationTrace) -> None:
    recs = [r for r in trace.records if r.beta is not None]
    n = recs[0].beta.size if recs else 0
    header = ["epoch", "consumed"] + [f"beta_{j}" for j in range(n)]
    write_rows(path, header, [[r.epoch, r.consumed, *map(float, r.beta)] for r in recs])


def write_params(path, params: MetamodelParams) -> None:
    write_rows(path, ["index", "value"], [(j, float(b)) for j, b in enumerate(params.beta)])


def read_params(path) -> MetamodelParams:
    _, rows = read_rows(path)
    return MetamodelParams(np.array([float(r[1]) for r in rows]))
