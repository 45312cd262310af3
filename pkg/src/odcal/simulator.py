"""Stochastic synthetic traffic simulator used as the black-box oracle.

The simulator shares the network and the fundamental diagram with the
analytical model but departs from it in three structured ways: OD demand is
realized as Poisson counts split across routes by multinomial draws, each
segment's diagram exponents are perturbed once per ``bias_seed``, and a
fraction of the downstream segment's demand spills back into the effective
demand of its upstream neighbour. Speeds then receive mean-one lognormal
noise. Switching all four effects off reduces the simulator to
``fd.speed(A @ x)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import _rng, fd
from .network import Network, build_assignment_matrix, check_bounds


@dataclass(frozen=True)
class SimulatorConfig:
    demand_noise: str = "poisson"
    speed_noise_sigma: float = 0.05
    param_bias_scale: float = 0.15
    spillback_coupling: float = 0.2
    bias_seed: int = 0

    def __post_init__(self):
        if self.demand_noise not in ("poisson", "none"):
            raise ValueError(f"demand_noise must be 'poisson' or 'none', got {self.demand_noise!r}")
        if self.speed_noise_sigma < 0:
            raise ValueError("speed_noise_sigma must be >= 0")
        if self.param_bias_scale < 0:
            raise ValueError("param_bias_scale must be >= 0")
        if not 0 <= self.spillback_coupling <= 1:
            raise ValueError("spillback_coupling must lie in [0, 1]")

    @classmethod
    def noise_free(cls) -> "SimulatorConfig":
        """All noise, bias and spillback switched off."""
        return cls(demand_noise="none", speed_noise_sigma=0.0, param_bias_scale=0.0, spillback_coupling=0.0)


@dataclass(eq=False)
class SimulationResult:
    """Per-segment speeds (m/s) and counts (veh/h), possibly replication means.

    ``rep_speeds`` and ``rep_counts`` hold one row per replication, in seed order.
    """

    speeds: np.ndarray
    counts: np.ndarray
    seeds: tuple[int, ...]
    demand: np.ndarray
    rep_speeds: np.ndarray = field(repr=False)
    rep_counts: np.ndarray = field(repr=False)

    @property
    def seed(self) -> int:
        return self.seeds[0]


@dataclass(eq=False)
class GroundTruth:
    segment_ids: list[str]
    gt_speed: np.ndarray
    gt_count: np.ndarray
    rep_speeds: np.ndarray
    gt_demand: np.ndarray | None = None

    @property
    def n_replications(self) -> int:
        return self.rep_speeds.shape[0]

    def speeds_for(self, net: Network) -> np.ndarray:
        """GT speeds aligned to the network's segment order."""
        if list(self.segment_ids) == net.segment_ids:
            return self.gt_speed
        pos = {s: k for k, s in enumerate(self.segment_ids)}
        return np.array([self.gt_speed[pos[s]] for s in net.segment_ids])

    def counts_for(self, net: Network) -> np.ndarray:
        if list(self.segment_ids) == net.segment_ids:
            return self.gt_count
        pos = {s: k for k, s in enumerate(self.segment_ids)}
        return np.array([self.gt_count[pos[s]] for s in net.segment_ids])


class _Compiled:
    """Flattened route incidences and biased diagram parameters for one (network, config)."""

    def __init__(self, net: Network, cfg: SimulatorConfig):
        self.net = net
        self.cfg = cfg
        self.A = build_assignment_matrix(net)
        seg_idx, route_idx, next_idx = [], [], []
        self.route_od, self.route_prob = [], []
        self.od_routes: list[np.ndarray] = []
        r = 0
        for z, od in enumerate(net.od_pairs):
            ids = []
            for route in od.routes:
                pos = [net.segment_index(s) for s in route.segment_ids]
                for k, i in enumerate(pos):
                    seg_idx.append(i)
                    route_idx.append(r)
                    next_idx.append(pos[k + 1] if k + 1 < len(pos) else -1)
                self.route_od.append(z)
                self.route_prob.append(route.probability)
                ids.append(r)
                r += 1
            self.od_routes.append(np.array(ids))
        self.route_prob = np.array(self.route_prob)
        self.seg_idx = np.array(seg_idx, dtype=int)
        self.route_idx = np.array(route_idx, dtype=int)
        self.next_idx = np.array(next_idx, dtype=int)
        # rank of the downstream segment id in string order; terminal positions rank last
        order = {sid: k for k, sid in enumerate(sorted(net.segment_ids))}
        id_rank = np.array([order[s] for s in net.segment_ids])
        self.next_rank = np.where(self.next_idx >= 0, id_rank[np.maximum(self.next_idx, 0)], len(order))

        self.v_min = net.segment_array("v_min")
        self.v_max = net.segment_array("v_max")
        self.q_max = net.segment_array("q_max")
        a1 = net.segment_array("fd_alpha1")
        a2 = net.segment_array("fd_alpha2")
        if cfg.param_bias_scale > 0:
            eta = np.array([_rng.stream(cfg.bias_seed, _rng.BIAS, i).standard_normal(2) for i in range(net.n_segments)])
            a1 = a1 * np.exp(cfg.param_bias_scale * eta[:, 0])
            a2 = a2 * np.exp(cfg.param_bias_scale * eta[:, 1])
        self.alpha1, self.alpha2 = a1, a2

    def route_flows(self, x: np.ndarray, seed: int) -> np.ndarray:
        flows = np.zeros(self.route_prob.size)
        for z, rids in enumerate(self.od_routes):
            p = self.route_prob[rids]
            if self.cfg.demand_noise == "none":
                flows[rids] = x[z] * p
            else:
                g = _rng.stream(seed, _rng.DEMAND, z)
                d = g.poisson(x[z])
                flows[rids] = g.multinomial(d, p / p.sum())
        return flows

    def downstream(self, flows: np.ndarray) -> np.ndarray:
        """Index of each segment's spillback source, -1 if none.

        The source is the next segment on the route carrying the most flow
        through the segment; ties go to the lowest downstream segment id.
        """
        inc_flow = flows[self.route_idx]
        order = np.lexsort((self.next_rank, -inc_flow, self.seg_idx))
        segs = self.seg_idx[order]
        first = np.r_[True, segs[1:] != segs[:-1]]
        down = np.full(self.net.n_segments, -1)
        down[segs[first]] = self.next_idx[order][first]
        return down

    def run(self, x: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        flows = self.route_flows(x, seed)
        if cfg.demand_noise == "none" and cfg.spillback_coupling == 0:
            q_hat = self.A @ x
        else:
            q_hat = np.bincount(self.seg_idx, weights=flows[self.route_idx], minlength=self.net.n_segments)
        q_eff = q_hat
        if cfg.spillback_coupling > 0:
            down = self.downstream(flows)
            spill = np.where(down >= 0, q_hat[np.maximum(down, 0)], 0.0)
            q_eff = np.clip(q_hat + cfg.spillback_coupling * spill, 0.0, self.q_max)
        v = fd.speed(q_eff, self.v_min, self.v_max, self.q_max, self.alpha1, self.alpha2)
        sigma = cfg.speed_noise_sigma
        if sigma > 0:
            xi = np.array([_rng.stream(seed, _rng.SPEED, i).standard_normal() for i in range(self.net.n_segments)])
            v = np.clip(v * np.exp(sigma * xi - 0.5 * sigma**2), 0.0, self.v_max)
        return v, q_hat


@functools.lru_cache(maxsize=16)
def _compile(net: Network, cfg: SimulatorConfig) -> _Compiled:
    return _Compiled(net, cfg)


def simulate(net: Network, x, seed: int, cfg: SimulatorConfig = SimulatorConfig()) -> SimulationResult:
    """One replication; a deterministic function of (net, x, seed, cfg)."""
    x = check_bounds(net, x, tol=1e-9)
    v, q = _compile(net, cfg).run(x, seed)
    return SimulationResult(v, q, (int(seed),), x.copy(), v[None, :], q[None, :])


def simulate_expected(net: Network, x, seeds, cfg: SimulatorConfig = SimulatorConfig()) -> SimulationResult:
    """Replication average over ``seeds``, reduced in seed-list order."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("simulate_expected needs at least one seed")
    x = check_bounds(net, x, tol=1e-9)
    comp = _compile(net, cfg)
    runs = [comp.run(x, s) for s in seeds]
    rep_v = np.array([r[0] for r in runs])
    rep_q = np.array([r[1] for r in runs])
    if len(seeds) == 1:
        return SimulationResult(rep_v[0], rep_q[0], tuple(seeds), x.copy(), rep_v, rep_q)
    return SimulationResult(rep_v.mean(axis=0), rep_q.mean(axis=0), tuple(seeds), x.copy(), rep_v, rep_q)


def replication_seeds(seed: int, n: int, *tag) -> list[int]:
    return [_rng.derive_seed(seed, *tag, r) for r in range(n)]


def generate_gt(net: Network, gt_demand, n_reps: int = 10, seed: int = 0,
                cfg: SimulatorConfig = SimulatorConfig()) -> GroundTruth:
    """Ground-truth speeds and counts from ``n_reps`` replications at the GT demand."""
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    res = simulate_expected(net, gt_demand, replication_seeds(seed, n_reps, "gt"), cfg)
    return GroundTruth(net.segment_ids, res.speeds, res.counts, res.rep_speeds, res.demand)


def generate_gt_demands(net: Network, seed: int) -> np.ndarray:
    """x_z ~ U[0.3, 0.8] * x_upper(z), each OD keyed by (seed, z)."""
    u = np.array([_rng.stream(seed, _rng.GT_DEMAND, z).uniform(0.3, 0.8) for z in range(net.n_od)])
    return u * net.x_upper
