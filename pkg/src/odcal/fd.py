"""Urban fundamental diagram: segment speed as a function of segment demand.

    v(q) = v_min + (v_max - v_min) * (1 - (q / q_max) ** alpha1) ** alpha2

All functions broadcast over numpy arrays, so a whole network can be evaluated
with per-segment parameter arrays in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

GRAD_EPS = 1e-6
ALPHA_BOX = (0.1, 10.0)
DEFAULT_V_MIN = 1.0
DEFAULT_ALPHA1 = 2.0
DEFAULT_ALPHA2 = 1.0


@dataclass(frozen=True)
class FdParams:
    v_min: float
    v_max: float
    q_max: float
    alpha1: float = DEFAULT_ALPHA1
    alpha2: float = DEFAULT_ALPHA2

    def __post_init__(self):
        if not (0 <= self.v_min < self.v_max):
            raise ValueError(f"need 0 <= v_min < v_max, got {self.v_min}, {self.v_max}")
        if not self.q_max > 0:
            raise ValueError(f"q_max must be positive, got {self.q_max}")
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError(f"alphas must be positive, got {self.alpha1}, {self.alpha2}")

    @classmethod
    def from_segment(cls, seg) -> "FdParams":
        return cls(seg.v_min, seg.v_max, seg.q_max, seg.fd_alpha1, seg.fd_alpha2)


@dataclass(frozen=True)
class FdSample:
    q: float
    v: float


def speed(q, v_min, v_max, q_max, alpha1, alpha2):
    """Array form of the diagram; q is clamped into [0, q_max]."""
    r = np.clip(np.asarray(q, dtype=float) / q_max, 0.0, 1.0)
    g = (1.0 - r**alpha1) ** alpha2
    v = np.clip(v_min + (v_max - v_min) * g, v_min, v_max)
    # exact endpoints: g == 1 at q = 0, g == 0 at q = q_max
    return np.where(g == 1.0, v_max, v)[()]


def speed_gradient(q, v_min, v_max, q_max, alpha1, alpha2, eps: float = GRAD_EPS):
    """dv/dq evaluated at q clamped into [eps*q_max, (1-eps)*q_max]; never positive."""
    r = np.clip(np.asarray(q, dtype=float) / q_max, eps, 1.0 - eps)
    ra = r**alpha1
    return -(v_max - v_min) * alpha2 * (1.0 - ra) ** (alpha2 - 1.0) * alpha1 * ra / r / q_max


def fd_speed(p: FdParams, q):
    return speed(q, p.v_min, p.v_max, p.q_max, p.alpha1, p.alpha2)


def fd_speed_gradient(p: FdParams, q):
    return speed_gradient(q, p.v_min, p.v_max, p.q_max, p.alpha1, p.alpha2)


def fit_fd_params(samples, v_min: float, v_max: float, q_max: float) -> tuple[float, float]:
    """Least-squares (alpha1, alpha2) for fixed speed range and capacity.

    Local bounded searches start from every node of a 5x5 log-spaced grid over
    the alpha box; the best terminal point (or grid node, if no search improved
    on it) is returned.
    """
    q = np.array([s.q for s in samples], dtype=float)
    v = np.array([s.v for s in samples], dtype=float)
    if q.size < 2:
        raise ValueError("insufficient-samples: need at least 2 (q, v) samples")
    if np.unique(q).size < 2:
        raise ValueError("degenerate samples: all demands are equal")

    r = np.clip(q / q_max, 1e-12, 1.0 - 1e-12)
    log_r = np.log(r)

    def sse(a):
        return float(np.sum((v - speed(q, v_min, v_max, q_max, a[0], a[1])) ** 2))

    def sse_and_grad(a):
        ra = r ** a[0]
        base = 1.0 - ra
        g = base ** a[1]
        resid = v_min + (v_max - v_min) * g - v
        dg_a1 = -a[1] * base ** (a[1] - 1.0) * ra * log_r
        dg_a2 = g * np.log(base)
        d = 2.0 * (v_max - v_min) * resid
        return float(resid @ resid), np.array([d @ dg_a1, d @ dg_a2])

    lo, hi = ALPHA_BOX
    grid = np.geomspace(lo, hi, 5)
    best_a, best_f = None, np.inf
    for a1 in grid:
        for a2 in grid:
            start = np.array([a1, a2])
            f0 = sse(start)
            if f0 < best_f:
                best_a, best_f = start, f0
            res = minimize(sse_and_grad, start, jac=True, method="L-BFGS-B", bounds=[ALPHA_BOX, ALPHA_BOX],
                           options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
            a = np.clip(res.x, lo, hi)
            f = sse(a)
            if f < best_f:
                best_a, best_f = a, f
    return float(best_a[0]), float(best_a[1])
