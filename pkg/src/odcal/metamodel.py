"""Analytical loss, the physics-plus-linear metamodel, and its weighted ridge fit.

The metamodel is

    m(x; beta) = beta[0] * f_A(x) + beta[1] + sum_z beta[z + 1] * x[z]

where f_A is the weighted squared speed error of the analytical model
(diagram speeds evaluated at segment demand ``A @ x``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fd
from .network import Network
from .simulator import GroundTruth, SimulationResult


class AnalyticalModel:
    """f_A and its gradient for a fixed network, GT, weights and segment set."""

    def __init__(self, net: Network, A: np.ndarray, gt: GroundTruth, weights, segment_set):
        ids = list(segment_set)
        if not ids:
            raise ValueError("segment set is empty")
        self.net = net
        self.idx = net.indices(ids)
        self.A_I = np.ascontiguousarray(A[self.idx])
        self.v_gt = gt.speeds_for(net)[self.idx]
        self.w = np.asarray(weights, dtype=float)[self.idx]
        self.x_upper = net.x_upper
        segs = [net.segments[i] for i in self.idx]
        self.v_min = np.array([s.v_min for s in segs])
        self.v_max = np.array([s.v_max for s in segs])
        self.q_max = np.array([s.q_max for s in segs])
        self.a1 = np.array([s.fd_alpha1 for s in segs])
        self.a2 = np.array([s.fd_alpha2 for s in segs])

    @property
    def n_od(self) -> int:
        return self.A_I.shape[1]

    def speeds(self, x) -> np.ndarray:
        q = self.A_I @ np.asarray(x, dtype=float)
        return fd.speed(q, self.v_min, self.v_max, self.q_max, self.a1, self.a2)

    def loss(self, x) -> float:
        r = (self.A_I @ np.asarray(x, dtype=float)) / self.q_max
        r = np.minimum(np.maximum(r, 0.0), 1.0)
        res = self.v_min + (self.v_max - self.v_min) * (1.0 - r**self.a1) ** self.a2 - self.v_gt
        return float((self.w * res) @ res) / res.size

    def loss_and_grad(self, x) -> tuple[float, np.ndarray]:
        # fused form of fd.speed / fd.speed_gradient; this is the inner solver's hot path
        r = (self.A_I @ np.asarray(x, dtype=float)) / self.q_max
        r_g = np.minimum(np.maximum(r, fd.GRAD_EPS), 1.0 - fd.GRAD_EPS)
        ra = r_g**self.a1
        base = 1.0 - ra
        g = base**self.a2
        span = self.v_max - self.v_min
        dv = -span * self.a2 * g / base * self.a1 * ra / (r_g * self.q_max)
        if not np.array_equal(r, r_g):
            r_v = np.minimum(np.maximum(r, 0.0), 1.0)
            g = (1.0 - r_v**self.a1) ** self.a2
        res = self.v_min + span * g - self.v_gt
        wr = self.w * res
        n = res.size
        return float(wr @ res) / n, (2.0 / n) * (self.A_I.T @ (wr * dv))

    def gradient(self, x) -> np.ndarray:
        return self.loss_and_grad(x)[1]


def analytical_loss(net, A, gt, weights, x, segment_set) -> float:
    return AnalyticalModel(net, A, gt, weights, segment_set).loss(x)


def analytical_loss_gradient(net, A, gt, weights, x, segment_set) -> np.ndarray:
    return AnalyticalModel(net, A, gt, weights, segment_set).gradient(x)


@dataclass
class MetamodelParams:
    beta: np.ndarray
    epoch: int = 0

    @classmethod
    def prior(cls, n_od: int) -> "MetamodelParams":
        beta = np.zeros(n_od + 2)
        beta[0] = 1.0
        return cls(beta)

    def predict(self, x, f_a: float) -> float:
        return metamodel_predict(self, x, f_a)

    def gradient(self, grad_f_a: np.ndarray) -> np.ndarray:
        return self.beta[0] * grad_f_a + self.beta[2:]


def metamodel_predict(params: MetamodelParams, x, f_a_of_x: float) -> float:
    x = np.asarray(x, dtype=float)
    b = params.beta
    if b.shape != (x.size + 2,):
        raise ValueError(f"beta has length {b.size}, expected {x.size + 2}")
    return float(b[0] * f_a_of_x + b[1] + b[2:] @ x)


@dataclass
class SamplePoint:
    x: np.ndarray
    loss: float
    f_a: float
    seeds_used: tuple = ()


@dataclass
class SampleSet:
    points: list[SamplePoint] = field(default_factory=list)
    dedup_tol: float = 1e-9

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return any(np.max(np.abs(p.x - x)) <= self.dedup_tol for p in self.points)

    def add(self, point: SamplePoint) -> bool:
        """Append unless a point with the same x is present; returns whether it was added."""
        if self.contains(point.x):
            return False
        self.points.append(point)
        return True


@dataclass(frozen=True)
class FitConfig:
    ridge_weight: float = 0.01
    distance_weighting: bool = True

    def __post_init__(self):
        if self.ridge_weight < 0:
            raise ValueError("ridge_weight must be >= 0")


def _design(samples: SampleSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.array([p.x for p in samples])
    F = np.column_stack([[p.f_a for p in samples], np.ones(len(samples)), X])
    L = np.array([p.loss for p in samples])
    return X, F, L


def sample_weights(samples: SampleSet, x_current, cfg: FitConfig) -> np.ndarray:
    X = np.array([p.x for p in samples])
    if not cfg.distance_weighting:
        return np.ones(len(X))
    return 1.0 / (1.0 + np.linalg.norm(X - np.asarray(x_current, dtype=float), axis=1))


def fit_metamodel(samples: SampleSet, x_current, cfg: FitConfig = FitConfig()) -> MetamodelParams:
    """Weighted least squares for beta with a ridge pull toward (1, 0, ..., 0).

    Minimizes sum_j lam_j (loss_j - m(x_j))^2 + w0 * ||beta - prior||^2. The
    problem is solved for the offset from the prior, so with w0 = 0 and too few
    samples the minimum-norm offset (the solution closest to the prior) is used.
    """
    if len(samples) == 0:
        raise ValueError("fit_metamodel needs at least one sample")
    _, F, L = _design(samples)
    prior = MetamodelParams.prior(F.shape[1] - 2).beta
    sw = np.sqrt(sample_weights(samples, x_current, cfg))
    M = sw[:, None] * F
    rhs = sw * (L - F @ prior)
    if cfg.ridge_weight > 0:
        M = np.vstack([M, np.sqrt(cfg.ridge_weight) * np.eye(F.shape[1])])
        rhs = np.concatenate([rhs, np.zeros(F.shape[1])])
    # column scaling only conditions the solve; the minimizer is unchanged
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0] = 1.0
    delta, *_ = np.linalg.lstsq(M / scale, rhs, rcond=None)
    return MetamodelParams(prior + delta / scale)


def fit_objective_gradient(samples: SampleSet, x_current, cfg: FitConfig, beta) -> np.ndarray:
    """Gradient of the fit objective at ``beta`` (zero at the exact minimizer)."""
    _, F, L = _design(samples)
    lam = sample_weights(samples, x_current, cfg)
    prior = MetamodelParams.prior(F.shape[1] - 2).beta
    return 2.0 * (F.T @ (lam * (F @ beta - L)) + cfg.ridge_weight * (beta - prior))


def simulated_loss(result: SimulationResult, gt: GroundTruth, weights, segment_set, net: Network) -> float:
    """Weighted mean squared error between GT speeds and simulated mean speeds over ``segment_set``."""
    ids = list(segment_set)
    if not ids:
        raise ValueError("segment set is empty")
    try:
        idx = net.indices(ids)
    except KeyError as exc:
        raise KeyError(f"segment {exc.args[0]!r} missing from simulation result") from None
    r = gt.speeds_for(net)[idx] - result.speeds[idx]
    return float(np.mean(np.asarray(weights, dtype=float)[idx] * r * r))

