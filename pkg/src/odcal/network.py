"""Network data model and the linear OD-demand to segment-demand map."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

PROB_TOL = 1e-9


class NetworkError(ValueError):
    """Raised when a network document is malformed or violates an invariant."""


@dataclass(frozen=True)
class Segment:
    id: str
    length: float
    v_max: float
    v_min: float
    q_max: float
    fd_alpha1: float
    fd_alpha2: float


@dataclass(frozen=True)
class Route:
    segment_ids: tuple[str, ...]
    probability: float


@dataclass(frozen=True)
class ODPair:
    id: int
    origin_zone: str
    dest_zone: str
    routes: tuple[Route, ...]
    x_upper: float


@dataclass(frozen=True)
class Diagnostic:
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: [{self.rule}] {self.message}"


@dataclass(frozen=True, eq=False)
class Network:
    """Segments plus OD pairs with fixed route sets and choice probabilities.

    Segment order is the order of the source document; it defines the row order
    of the assignment matrix and of every per-segment array in the package.
    """

    segments: tuple[Segment, ...]
    od_pairs: tuple[ODPair, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s.id: i for i, s in enumerate(self.segments)})

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def n_od(self) -> int:
        return len(self.od_pairs)

    @property
    def segment_ids(self) -> list[str]:
        return [s.id for s in self.segments]

    def segment_index(self, seg_id: str) -> int:
        return self._index[seg_id]

    def indices(self, seg_ids) -> np.ndarray:
        return np.array([self._index[s] for s in seg_ids], dtype=int)

    @property
    def x_upper(self) -> np.ndarray:
        return np.array([od.x_upper for od in self.od_pairs], dtype=float)

    def segment_array(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.segments], dtype=float)

    def routed_mask(self) -> np.ndarray:
        """True for segments that lie on at least one route."""
        mask = np.zeros(self.n_segments, dtype=bool)
        for od in self.od_pairs:
            for r in od.routes:
                for s in r.segment_ids:
                    mask[self._index[s]] = True
        return mask

    def to_dict(self) -> dict[str, Any]:
        return {
            "segments": [
                {
                    "id": s.id,
                    "length_m": s.length,
                    "v_max_ms": s.v_max,
                    "v_min_ms": s.v_min,
                    "q_max_vph": s.q_max,
                    "alpha1": s.fd_alpha1,
                    "alpha2": s.fd_alpha2,
                }
                for s in self.segments
            ],
            "od_pairs": [
                {
                    "id": od.id,
                    "origin": od.origin_zone,
                    "dest": od.dest_zone,
                    "x_upper_vph": od.x_upper,
                    "routes": [{"segments": list(r.segment_ids), "prob": r.probability} for r in od.routes],
                }
                for od in self.od_pairs
            ],
        }


def validate_network(net: Network) -> list[Diagnostic]:
    """Check every type invariant; an empty list means the network is valid."""
    diags: list[Diagnostic] = []
    seen: set[str] = set()
    for s in net.segments:
        if s.id in seen:
            diags.append(Diagnostic(s.id, "unique-id", "duplicate segment id"))
        seen.add(s.id)
        if not s.length > 0:
            diags.append(Diagnostic(s.id, "length", f"length must be > 0, got {s.length}"))
        if not (0 <= s.v_min < s.v_max):
            diags.append(Diagnostic(s.id, "speed-order", f"need 0 <= v_min < v_max, got {s.v_min}, {s.v_max}"))
        if not s.q_max > 0:
            diags.append(Diagnostic(s.id, "q-max", f"q_max must be > 0, got {s.q_max}"))
        if not (s.fd_alpha1 > 0 and s.fd_alpha2 > 0):
            diags.append(Diagnostic(s.id, "fd-alpha", f"alphas must be > 0, got {s.fd_alpha1}, {s.fd_alpha2}"))
        values = (s.length, s.v_max, s.v_min, s.q_max, s.fd_alpha1, s.fd_alpha2)
        if not all(math.isfinite(v) for v in values):
            diags.append(Diagnostic(s.id, "finite", "non-finite segment attribute"))

    for k, od in enumerate(net.od_pairs, start=1):
        name = f"od {od.id}"
        if od.id != k:
            diags.append(Diagnostic(name, "od-index", f"OD indices must be contiguous from 1; expected {k}"))
        if not od.x_upper > 0:
            diags.append(Diagnostic(name, "x-upper", f"x_upper must be > 0, got {od.x_upper}"))
        if not od.routes:
            diags.append(Diagnostic(name, "routes", "OD has no routes"))
            continue
        total = sum(r.probability for r in od.routes)
        if abs(total - 1.0) > PROB_TOL:
            diags.append(Diagnostic(name, "probability-sum", f"route probabilities sum to {total!r}"))
        for j, r in enumerate(od.routes):
            rname = f"{name} route {j}"
            if not (0.0 <= r.probability <= 1.0):
                diags.append(Diagnostic(rname, "probability-range", f"probability {r.probability} outside [0, 1]"))
            if not r.segment_ids:
                diags.append(Diagnostic(rname, "route-empty", "route has no segments"))
            if len(set(r.segment_ids)) != len(r.segment_ids):
                diags.append(Diagnostic(rname, "route-repeat", "route visits a segment twice"))
            for sid in r.segment_ids:
                if sid not in seen:
                    diags.append(Diagnostic(sid, "unknown-segment", f"{rname} references unknown segment {sid!r}"))
    return diags


def _get(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise NetworkError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise NetworkError(f"{where}: field {key!r} must be a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise NetworkError(f"{where}: field {key!r} must be an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise NetworkError(f"{where}: field {key!r} must be a string, got {value!r}")
        return str(value)
    if not isinstance(value, list):
        raise NetworkError(f"{where}: field {key!r} must be a list")
    return value


def network_from_dict(doc: dict[str, Any]) -> Network:
    """Build and validate a Network from a parsed network document."""
    segments = []
    for k, item in enumerate(_get(doc, "segments", list, "network")):
        where = f"segment {item.get('id', k) if isinstance(item, dict) else k}"
        segments.append(
            Segment(
                id=_get(item, "id", str, where),
                length=_get(item, "length_m", float, where),
                v_max=_get(item, "v_max_ms", float, where),
                v_min=_get(item, "v_min_ms", float, where),
                q_max=_get(item, "q_max_vph", float, where),
                fd_alpha1=_get(item, "alpha1", float, where),
                fd_alpha2=_get(item, "alpha2", float, where),
            )
        )
    ods = []
    for k, item in enumerate(_get(doc, "od_pairs", list, "network")):
        where = f"od {item.get('id', k + 1) if isinstance(item, dict) else k + 1}"
        routes = []
        for j, r in enumerate(_get(item, "routes", list, where)):
            rwhere = f"{where} route {j}"
            seg_ids = _get(r, "segments", list, rwhere)
            routes.append(Route(tuple(str(s) for s in seg_ids), _get(r, "prob", float, rwhere)))
        ods.append(
            ODPair(
                id=_get(item, "id", int, where),
                origin_zone=_get(item, "origin", str, where),
                dest_zone=_get(item, "dest", str, where),
                routes=tuple(routes),
                x_upper=_get(item, "x_upper_vph", float, where),
            )
        )
    net = Network(tuple(segments), tuple(ods))
    diags = validate_network(net)
    if diags:
        raise NetworkError("; ".join(str(d) for d in diags))
    return net


def load_network(source) -> Network:
    """Load a network from a JSON document (path, JSON text, or parsed dict)."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        doc = json.loads(Path(source).read_text())
    else:
        doc = json.loads(source)
    return network_from_dict(doc)


def dump_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1) + "\n")


def build_assignment_matrix(net: Network) -> np.ndarray:
    """Dense |segments| x |OD| matrix; entry (i, z) sums the probabilities of z's routes through i."""
    A = np.zeros((net.n_segments, net.n_od))
    for z, od in enumerate(net.od_pairs):
        for r in od.routes:
            for sid in r.segment_ids:
                A[net.segment_index(sid), z] += r.probability
    A.setflags(write=False)
    return A


def map_demand(A: np.ndarray, x) -> np.ndarray:
    """Segment demand q = A x."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"demand vector has shape {x.shape}, expected ({A.shape[1]},)")
    return A @ x


def check_bounds(net: Network, x, tol: float = 0.0) -> np.ndarray:
    """Return x as an array, raising if it leaves the box [0, x_upper]."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n_od,):
        raise ValueError(f"demand vector has shape {x.shape}, expected ({net.n_od},)")
    ub = net.x_upper
    bad = np.flatnonzero(~np.isfinite(x) | (x < -tol) | (x > ub + tol))
    if bad.size:
        z = int(bad[0])
        raise ValueError(f"demand for od {z + 1} is {x[z]!r}, outside [0, {ub[z]}]")
    return x
