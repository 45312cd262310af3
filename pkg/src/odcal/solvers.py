"""Metamodel-based calibration loop, bound-constrained inner solver, and SPSA.

Both calibrators consume an ``evaluate(x, seeds) -> loss`` callable through a
budget-accounting wrapper, so the simulator is never called outside the
budget. ``calibrate_metamodel`` and ``calibrate_spsa`` wire that callable to the
synthetic simulator; ``metamodel_search`` and ``spsa_search`` accept any loss
(the unit tests use analytic surrogates).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _rng
from .evaluation import gt_weights
from .metamodel import (AnalyticalModel, FitConfig, MetamodelParams, SamplePoint, SampleSet, fit_metamodel,
                        simulated_loss)
from .network import Network, build_assignment_matrix
from .simulator import GroundTruth, SimulatorConfig, replication_seeds, simulate_expected

log = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray, list], float]

ARMIJO = 1e-4


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class EvaluationBudget:
    max_vectors: int = 250
    consumed: int = 0

    @property
    def remaining(self) -> int:
        return self.max_vectors - self.consumed


@dataclass(frozen=True)
class OptimizerConfig:
    n_initial_random: int = 5
    inner_starts: int = 5
    inner_max_iters: int = 200
    inner_tol: float = 1e-6
    exploration_prob: float = 0.2
    reps_per_eval: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.n_initial_random, self.inner_starts, self.inner_max_iters, self.reps_per_eval) < 1:
            raise ValueError("counts in OptimizerConfig must be positive")
        if not 0 <= self.exploration_prob <= 1:
            raise ValueError("exploration_prob must lie in [0, 1]")


@dataclass(frozen=True)
class SpsaConfig:
    a: float | None = None
    c: float | None = None
    A_stab: float | None = None
    alpha: float = 0.602
    gamma: float = 0.101
    seed: int = 0
    reps_per_eval: int = 1

    def __post_init__(self):
        if (self.a is not None and self.a <= 0) or (self.c is not None and self.c <= 0):
            raise ValueError("SPSA gains a and c must be positive")
        if not 0.5 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0.5, 1]")
        if not 0 < self.gamma <= 0.5:
            raise ValueError("gamma must lie in (0, 0.5]")


@dataclass
class TraceRecord:
    epoch: int
    consumed: int
    x: np.ndarray
    loss: float
    accepted: bool
    best_loss: float
    beta: np.ndarray | None = None


@dataclass
class CalibrationTrace:
    algorithm: str
    records: list[TraceRecord] = field(default_factory=list)
    initial_x: np.ndarray | None = None
    best_x: np.ndarray | None = None
    best_loss: float = np.inf

    @property
    def consumed(self) -> int:
        return self.records[-1].consumed if self.records else 0


class _Evaluator:
    """Budgeted evaluation of candidate vectors; the only path to the loss."""

    def __init__(self, loss_fn: LossFn, budget: EvaluationBudget, upper, seed: int, reps: int, trace: CalibrationTrace):
        self.loss_fn = loss_fn
        self.budget = budget
        self.upper = upper
        self.seed = seed
        self.reps = reps
        self.trace = trace

    def __call__(self, x, epoch: int, beta=None) -> float:
        if self.budget.remaining <= 0:
            raise BudgetExhausted(f"evaluation budget of {self.budget.max_vectors} exhausted")
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.upper)
        seeds = replication_seeds(self.seed, self.reps, "search", self.budget.consumed)
        loss = float(self.loss_fn(x, seeds))
        self.budget.consumed += 1
        t = self.trace
        accepted = loss < t.best_loss
        if accepted:
            t.best_loss, t.best_x = loss, x.copy()
        t.records.append(TraceRecord(epoch, self.budget.consumed, x.copy(), loss, accepted, t.best_loss,
                                     None if beta is None else np.array(beta)))
        return loss


def _box(u):
    return np.minimum(np.maximum(u, 0.0), 1.0)


def solve_inner(params: MetamodelParams, model: AnalyticalModel, starts, cfg: OptimizerConfig = OptimizerConfig(),
                history: list | None = None) -> np.ndarray:
    """Minimize the metamodel over the box [0, x_upper] by projected gradient descent.

    Iterates run in coordinates scaled by x_upper (so the box is the unit cube).
    Each iteration backtracks from step 1 / max(1, ||grad||) with halving until
    the Armijo condition holds. The terminal point with the lowest metamodel
    value over all starts is returned. If ``history`` is a list, one list of
    per-iteration metamodel values per start is appended to it.
    """
    ub = model.x_upper
    beta0, lin = params.beta[0], params.beta[2:] * ub
    intercept = params.beta[1]

    def m(u):
        return beta0 * model.loss(u * ub) + intercept + lin @ u

    def m_grad(u):
        f, g = model.loss_and_grad(u * ub)
        return beta0 * f + intercept + lin @ u, beta0 * g * ub + lin

    best_u, best_val = None, np.inf
    for s in starts:
        u = _box(np.asarray(s, dtype=float) / ub)
        val, g = m_grad(u)
        values = [val]
        for _ in range(cfg.inner_max_iters):
            if np.max(np.abs(u - _box(u - g))) < cfg.inner_tol:
                break
            t = 1.0 / max(1.0, math.sqrt(g @ g))
            while t > 1e-14:
                u_new = _box(u - t * g)
                val_new = m(u_new)
                if val_new <= val + ARMIJO * (g @ (u_new - u)):
                    break
                t *= 0.5
            else:
                break
            u = u_new
            val, g = m_grad(u)
            values.append(val)
        if history is not None:
            history.append(values)
        if val < best_val:
            best_u, best_val = u, val
    return best_u * ub


def _uniform(rng: np.random.Generator, ub: np.ndarray) -> np.ndarray:
    return rng.uniform(0.0, 1.0, ub.size) * ub


def metamodel_search(model: AnalyticalModel, loss_fn: LossFn, x0, budget: EvaluationBudget,
                     opt_cfg: OptimizerConfig = OptimizerConfig(), fit_cfg: FitConfig = FitConfig()) -> CalibrationTrace:
    """Metamodel simulation-optimization loop against an arbitrary loss."""
    if budget.remaining < opt_cfg.n_initial_random + 1:
        raise ValueError(f"budget {budget.remaining} too small for {opt_cfg.n_initial_random} initial samples")
    ub = model.x_upper
    rng = _rng.stream(opt_cfg.seed, _rng.UNIFORM)
    trace = CalibrationTrace("metamodel", initial_x=np.clip(np.asarray(x0, dtype=float), 0.0, ub))
    evaluate = _Evaluator(loss_fn, budget, ub, opt_cfg.seed, opt_cfg.reps_per_eval, trace)
    samples = SampleSet()

    def sample(x, epoch, beta=None):
        loss = evaluate(x, epoch, beta)
        samples.add(SamplePoint(trace.records[-1].x, loss, model.loss(trace.records[-1].x)))

    def fresh_point(x):
        while samples.contains(x):
            x = _uniform(rng, ub)
        return x

    sample(trace.initial_x, 0)
    for _ in range(opt_cfg.n_initial_random):
        sample(fresh_point(_uniform(rng, ub)), 0)

    epoch = 0
    while budget.remaining > 0:
        epoch += 1
        params = fit_metamodel(samples, trace.best_x, fit_cfg)
        params.epoch = epoch
        starts = [trace.best_x] + [_uniform(rng, ub) for _ in range(opt_cfg.inner_starts - 1)]
        cand = solve_inner(params, model, starts, opt_cfg)
        if rng.random() < opt_cfg.exploration_prob:
            cand = _uniform(rng, ub)
        sample(fresh_point(cand), epoch, params.beta)
    log.debug("metamodel search done: best loss %.6g after %d evaluations", trace.best_loss, budget.consumed)
    return trace


def spsa_gradient_estimate(x, c_k: float, delta, evaluator: Callable[[np.ndarray], float], upper=None):
    """Two-sided simultaneous-perturbation gradient estimate (two evaluations)."""
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if c_k <= 0:
        raise ValueError("c_k must be positive")
    if not np.all(np.abs(delta) == 1):
        raise ValueError("perturbation components must be +1 or -1")
    hi = np.inf if upper is None else upper
    l_plus = evaluator(np.clip(x + c_k * delta, 0.0, hi))
    l_minus = evaluator(np.clip(x - c_k * delta, 0.0, hi))
    return (l_plus - l_minus) / (2.0 * c_k) * delta


def spsa_search(loss_fn: LossFn, x0, upper, budget: EvaluationBudget, cfg: SpsaConfig = SpsaConfig()) -> CalibrationTrace:
    """Projected SPSA with standard gain sequences; best point tracked over perturbation evaluations.

    Unset gains are auto-scaled: c = 0.05 mean(upper), A_stab = 0.1 budget/2,
    and a is set from a pilot gradient estimate (two evaluations) so the first
    step moves about 2% of mean(upper) per component.
    """
    if budget.remaining < 2:
        raise ValueError("SPSA needs a budget of at least 2 evaluations")
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), 0.0, upper)
    rng = _rng.stream(cfg.seed, _rng.UNIFORM)
    trace = CalibrationTrace("spsa", initial_x=x.copy())
    evaluate = _Evaluator(loss_fn, budget, upper, cfg.seed, cfg.reps_per_eval, trace)
    scale = float(upper.mean())
    c = cfg.c if cfg.c is not None else 0.05 * scale
    A_stab = cfg.A_stab if cfg.A_stab is not None else 0.1 * (budget.remaining / 2)

    def rademacher():
        return rng.choice([-1.0, 1.0], size=x.size)

    a = cfg.a
    if a is None:
        g0 = spsa_gradient_estimate(x, c, rademacher(), lambda y: evaluate(y, 0), upper)
        size = float(np.mean(np.abs(g0)))
        a = 0.02 * scale * (A_stab + 1) ** cfg.alpha / size if size > 0 else 0.02 * scale
    k = 0
    while budget.remaining >= 2:
        a_k = a / (A_stab + k + 1) ** cfg.alpha
        c_k = c / (k + 1) ** cfg.gamma
        g = spsa_gradient_estimate(x, c_k, rademacher(), lambda y: evaluate(y, k + 1), upper)
        x = np.clip(x - a_k * g, 0.0, upper)
        k += 1
    return trace


def simulation_loss_fn(net: Network, gt: GroundTruth, segment_set, sim_cfg: SimulatorConfig, weights=None) -> LossFn:
    """Simulated weighted speed loss as an ``evaluate(x, seeds)`` callable."""
    w = gt_weights(net, gt) if weights is None else weights
    ids = list(segment_set)

    def loss(x, seeds):
        return simulated_loss(simulate_expected(net, x, seeds, sim_cfg), gt, w, ids, net)

    return loss


def calibrate_metamodel(net: Network, gt: GroundTruth, segment_set, budget: EvaluationBudget | int = 250,
                        opt_cfg: OptimizerConfig = OptimizerConfig(), fit_cfg: FitConfig = FitConfig(),
                        sim_cfg: SimulatorConfig = SimulatorConfig(), x0=None) -> CalibrationTrace:
    """Calibrate OD demands to GT speeds on ``segment_set`` with the metamodel method."""
    if isinstance(budget, int):
        budget = EvaluationBudget(budget)
    weights = gt_weights(net, gt)
    model = AnalyticalModel(net, build_assignment_matrix(net), gt, weights, segment_set)
    if x0 is None:
        x0 = _uniform(_rng.stream(opt_cfg.seed, _rng.UNIFORM, 0), net.x_upper)
    return metamodel_search(model, simulation_loss_fn(net, gt, segment_set, sim_cfg, weights), x0, budget, opt_cfg, fit_cfg)


def calibrate_spsa(net: Network, gt: GroundTruth, segment_set, budget: EvaluationBudget | int = 250,
                   spsa_cfg: SpsaConfig = SpsaConfig(), sim_cfg: SimulatorConfig = SimulatorConfig(),
                   x0=None) -> CalibrationTrace:
    """Calibrate OD demands to GT speeds on ``segment_set`` with SPSA."""
    if isinstance(budget, int):
        budget = EvaluationBudget(budget)
    if x0 is None:
        x0 = _uniform(_rng.stream(spsa_cfg.seed, _rng.UNIFORM, 0), net.x_upper)
    return spsa_search(simulation_loss_fn(net, gt, segment_set, sim_cfg), x0, net.x_upper, budget, spsa_cfg)
