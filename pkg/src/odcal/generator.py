"""Synthetic network generator.

Layout: every zone owns an outbound and an inbound connector segment. An OD
pair's routes all start on the origin's outbound connector and end on the
destination's inbound connector; in between each route draws its own arterial
segments from a shared pool, disjoint from the other routes of the same OD.
Route probabilities are normalized U[0.2, 1] weights. Segment capacity q_max is
set to a random margin above the load produced when every OD sits at its
upper bound, so the analytical diagram stays on its differentiable branch over
the whole feasible box.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _rng
from .network import Network, ODPair, Route, Segment, build_assignment_matrix, validate_network

SPEED_LIMITS = (11.11, 13.89, 16.67)  # 40, 50, 60 km/h


@dataclass(frozen=True)
class GeneratorConfig:
    n_zones: int = 8
    n_od_pairs: int = 20
    routes_per_od: int = 3
    segments_per_route: tuple[int, int] = (4, 6)
    n_arterials: int = 84
    x_upper: tuple[float, float] = (600.0, 1200.0)
    alpha1: tuple[float, float] = (1.5, 3.0)
    alpha2: tuple[float, float] = (0.8, 1.5)
    capacity_margin: tuple[float, float] = (1.2, 1.8)
    v_min: float = 1.0
    seed: int = 7

    def __post_init__(self):
        lo, hi = self.segments_per_route
        if self.routes_per_od < 1:
            raise ValueError("routes_per_od must be >= 1")
        if lo < 3 or hi < lo:
            raise ValueError(f"segments_per_route range {self.segments_per_route} is empty or below 3")
        if self.n_zones < 2 or self.n_od_pairs > self.n_zones * (self.n_zones - 1):
            raise ValueError("not enough zones for the requested number of distinct OD pairs")
        if self.routes_per_od * (hi - 2) > self.n_arterials:
            raise ValueError("arterial pool too small for disjoint routes")
        for name in ("x_upper", "alpha1", "alpha2", "capacity_margin"):
            a, b = getattr(self, name)
            if not 0 < a <= b:
                raise ValueError(f"range {name}={getattr(self, name)} is empty or nonpositive")

    @classmethod
    def paper_scale(cls, seed: int = 7) -> "GeneratorConfig":
        """62 OD pairs with 3 routes each (186 routes)."""
        return cls(n_zones=16, n_od_pairs=62, n_arterials=260, seed=seed)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown generator fields: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def generate_network(cfg: GeneratorConfig = GeneratorConfig()) -> Network:
    rng = _rng.stream(cfg.seed, _rng.UNIFORM)
    n_conn = 2 * cfg.n_zones
    n_seg = n_conn + cfg.n_arterials
    width = len(str(n_seg - 1))
    ids = [f"s{k:0{width}d}" for k in range(n_seg)]
    out_conn = ids[: cfg.n_zones]
    in_conn = ids[cfg.n_zones: n_conn]
    arterials = ids[n_conn:]
    zones = [f"z{k:02d}" for k in range(cfg.n_zones)]

    pairs = [(o, d) for o in range(cfg.n_zones) for d in range(cfg.n_zones) if o != d]
    chosen = sorted(rng.choice(len(pairs), size=cfg.n_od_pairs, replace=False))
    lo, hi = cfg.segments_per_route
    od_pairs = []
    for z, k in enumerate(chosen, start=1):
        o, d = pairs[k]
        n_mid = rng.integers(lo - 2, hi - 1, size=cfg.routes_per_od)
        mids = rng.choice(cfg.n_arterials, size=int(n_mid.sum()), replace=False)
        weights = rng.uniform(0.2, 1.0, cfg.routes_per_od)
        probs = weights / weights.sum()
        probs[-1] = 1.0 - probs[:-1].sum()
        routes, pos = [], 0
        for r in range(cfg.routes_per_od):
            mid = [arterials[m] for m in mids[pos: pos + n_mid[r]]]
            pos += n_mid[r]
            routes.append(Route((out_conn[o], *mid, in_conn[d]), float(probs[r])))
        x_up = float(np.round(rng.uniform(*cfg.x_upper)))
        od_pairs.append(ODPair(z, zones[o], zones[d], tuple(routes), x_up))

    v_max = rng.choice(SPEED_LIMITS, size=n_seg)
    length = np.round(rng.uniform(100.0, 800.0, n_seg), 1)
    a1 = np.round(rng.uniform(*cfg.alpha1, n_seg), 3)
    a2 = np.round(rng.uniform(*cfg.alpha2, n_seg), 3)
    margin = rng.uniform(*cfg.capacity_margin, n_seg)
    provisional = Network(
        tuple(Segment(s, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0) for s in ids), tuple(od_pairs)
    )
    load = build_assignment_matrix(provisional) @ provisional.x_upper
    # unrouted arterials get a nominal capacity
    q_max = np.where(load > 0, np.ceil(margin * load), 1800.0)
    segments = tuple(
        Segment(ids[i], float(length[i]), float(v_max[i]), cfg.v_min, float(q_max[i]), float(a1[i]), float(a2[i]))
        for i in range(n_seg)
    )
    net = Network(segments, tuple(od_pairs))
    diags = validate_network(net)
    if diags:  # pragma: no cover - generator contract
        raise RuntimeError(f"generator produced an invalid network: {diags[0]}")
    return net
