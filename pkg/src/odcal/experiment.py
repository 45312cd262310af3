"""Config-driven experiment pipeline: generate, ground truth, calibrate, report.

Each step reads and writes files under ``output_dir`` so that calibration only
ever sees the network and the GT speed/count table, never the GT demand::

    <output_dir>/gt/gt_demand.csv
    <output_dir>/gt/ground_truth.csv
    <output_dir>/gt/analytical_network.json
    <output_dir>/runs/<algorithm>/t<threshold>/run<r>/{initial_demand,final_demand,trace,beta}.csv
    <output_dir>/report/table.csv
    <output_dir>/report/scatter_<algorithm>_t<threshold>.csv
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng, files
from .evaluation import (average_reports, complement_set, evaluate_demands, gt_weights, scatter_export,
                         select_segments_by_congestion, set_metrics)
from .fd import FdSample, fit_fd_params
from .generator import GeneratorConfig, generate_network
from .metamodel import AnalyticalModel, FitConfig
from .network import Network, build_assignment_matrix, dump_network, load_network
from .simulator import (GroundTruth, SimulatorConfig, generate_gt, generate_gt_demands, replication_seeds,
                        simulate, simulate_expected)
from .solvers import (EvaluationBudget, OptimizerConfig, SpsaConfig, metamodel_search, simulation_loss_fn,
                      spsa_search)

log = logging.getLogger(__name__)

ALGORITHMS = ("metamodel", "spsa")


def _from_dict(cls, d: dict | None):
    d = dict(d or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**d)


@dataclass
class ExperimentConfig:
    network_path: Path
    output_dir: Path
    gt_seed: int = 1
    gt_n_reps: int = 10
    simulator: SimulatorConfig = SimulatorConfig()
    algorithms: dict = field(default_factory=lambda: {"metamodel": {}, "spsa": {}})
    budget: int = 250
    n_calibration_runs: int = 5
    thresholds: tuple[float, ...] = (0.8, 0.9, 1.0)
    final_eval_reps: int = 5
    master_seed: int = 0
    fd_fit_samples: int = 40
    generator: GeneratorConfig = GeneratorConfig()

    def __post_init__(self):
        if any(not 0 < t <= 1 for t in self.thresholds):
            raise ValueError(f"thresholds must lie in (0, 1], got {self.thresholds}")
        if self.n_calibration_runs < 1:
            raise ValueError("n_calibration_runs must be >= 1")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        base = Path(base_dir)
        d = dict(d)
        known = {"network_path", "output_dir", "gt", "simulator", "algorithms", "budget", "n_calibration_runs",
                 "thresholds", "final_eval_reps", "master_seed", "fd_fit", "generator"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        for key in ("network_path", "output_dir"):
            if key not in d:
                raise ValueError(f"config is missing {key!r}")
        gt = d.get("gt", {})
        algs = {}
        for item in d.get("algorithms", [{"name": "metamodel"}, {"name": "spsa"}]):
            algs[item["name"]] = item.get("config", {})
        fd_fit = d.get("fd_fit", {"n_samples": 40})
        return cls(
            network_path=base / d["network_path"],
            output_dir=base / d["output_dir"],
            gt_seed=int(gt.get("seed", 1)),
            gt_n_reps=int(gt.get("n_reps", 10)),
            simulator=_from_dict(SimulatorConfig, d.get("simulator")),
            algorithms=algs,
            budget=int(d.get("budget", 250)),
            n_calibration_runs=int(d.get("n_calibration_runs", 5)),
            thresholds=tuple(float(t) for t in d.get("thresholds", (0.8, 0.9, 1.0))),
            final_eval_reps=int(d.get("final_eval_reps", 5)),
            master_seed=int(d.get("master_seed", 0)),
            fd_fit_samples=0 if fd_fit is None else int(fd_fit.get("n_samples", 40)),
            generator=GeneratorConfig.from_dict(d.get("generator", {})),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)

    # artifact locations
    @property
    def gt_dir(self) -> Path:
        return self.output_dir / "gt"

    def run_dir(self, algorithm: str, threshold: float, r: int) -> Path:
        return self.output_dir / "runs" / algorithm / f"t{threshold:g}" / f"run{r}"

    @property
    def report_dir(self) -> Path:
        return self.output_dir / "report"


def run_seed(master_seed: int, algorithm: str, threshold: float, r: int) -> int:
    return _rng.derive_seed(master_seed, algorithm, f"{threshold:g}", r)


def initial_demand(net: Network, master_seed: int, threshold: float, r: int) -> np.ndarray:
    """Run r's starting point, U[0, x_upper]; shared by all algorithms at a threshold."""
    seed = _rng.derive_seed(master_seed, "initial", f"{threshold:g}", r)
    return _rng.stream(seed, _rng.UNIFORM).uniform(0.0, 1.0, net.n_od) * net.x_upper


def fit_analytical_network(net: Network, sim_cfg: SimulatorConfig, n_samples: int = 40, seed: int = 0) -> Network:
    """Refit each routed segment's diagram exponents to simulated (A x, speed) pairs.

    Demand vectors are drawn uniformly over the feasible box; speed range and
    capacity stay fixed. Segments that never carry demand keep their exponents.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 simulated samples to fit diagram exponents")
    A = build_assignment_matrix(net)
    rng = _rng.stream(seed, _rng.UNIFORM)
    X = rng.uniform(0.0, 1.0, (n_samples, net.n_od)) * net.x_upper
    V = np.array([simulate(net, x, _rng.derive_seed(seed, "fd-fit", k), sim_cfg).speeds for k, x in enumerate(X)])
    Q = X @ A.T
    segments = []
    for i, seg in enumerate(net.segments):
        q = Q[:, i]
        if np.unique(q).size >= 2 and q.min() > 0:
            a1, a2 = fit_fd_params([FdSample(a, b) for a, b in zip(q, V[:, i])], seg.v_min, seg.v_max, seg.q_max)
            seg = dataclasses.replace(seg, fd_alpha1=a1, fd_alpha2=a2)
        segments.append(seg)
    return Network(tuple(segments), net.od_pairs)


# pipeline steps


def cmd_gen_network(gen_cfg: GeneratorConfig, path) -> Network:
    net = generate_network(gen_cfg)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    dump_network(net, path)
    return net


def cmd_gen_gt(cfg: ExperimentConfig) -> GroundTruth:
    net = load_network(cfg.network_path)
    gt_demand = generate_gt_demands(net, cfg.gt_seed)
    gt = generate_gt(net, gt_demand, cfg.gt_n_reps, cfg.gt_seed, cfg.simulator)
    files.write_demand(cfg.gt_dir / "gt_demand.csv", gt_demand)
    files.write_ground_truth(cfg.gt_dir / "ground_truth.csv", gt)
    if cfg.fd_fit_samples:
        fitted = fit_analytical_network(net, cfg.simulator, cfg.fd_fit_samples,
                                        _rng.derive_seed(cfg.master_seed, "fd-fit"))
    else:
        fitted = net
    dump_network(fitted, cfg.gt_dir / "analytical_network.json")
    return gt


def _calibration_inputs(cfg: ExperimentConfig):
    gt_path = cfg.gt_dir / "ground_truth.csv"
    if not gt_path.exists():
        raise FileNotFoundError(f"{gt_path} not found; run gen-gt first")
    net = load_network(cfg.network_path)
    model_net = load_network(cfg.gt_dir / "analytical_network.json")
    gt = files.read_ground_truth(gt_path)
    return net, model_net, gt


def calibrate_run(net: Network, model_net: Network, gt: GroundTruth, algorithm: str, threshold: float, r: int,
                  cfg: ExperimentConfig):
    """One calibration run; returns (initial demand, trace)."""
    in_set = select_segments_by_congestion(gt, net, threshold)
    if not len(in_set):
        raise ValueError(f"no segments at threshold {threshold:g}")
    seed = run_seed(cfg.master_seed, algorithm, threshold, r)
    x0 = initial_demand(net, cfg.master_seed, threshold, r)
    budget = EvaluationBudget(cfg.budget)
    weights = gt_weights(net, gt)
    loss_fn = simulation_loss_fn(net, gt, in_set, cfg.simulator, weights)
    opts = dict(cfg.algorithms.get(algorithm, {}))
    if algorithm == "metamodel":
        fit_cfg = _from_dict(FitConfig, opts.pop("fit", None))
        opt_cfg = _from_dict(OptimizerConfig, {**opts, "seed": seed})
        model = AnalyticalModel(model_net, build_assignment_matrix(model_net), gt, weights, in_set)
        trace = metamodel_search(model, loss_fn, x0, budget, opt_cfg, fit_cfg)
    elif algorithm == "spsa":
        spsa_cfg = _from_dict(SpsaConfig, {**opts, "seed": seed})
        trace = spsa_search(loss_fn, x0, net.x_upper, budget, spsa_cfg)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return x0, trace


def cmd_calibrate(cfg: ExperimentConfig, algorithm: str, threshold: float) -> list:
    net, model_net, gt = _calibration_inputs(cfg)
    traces = []
    for r in range(cfg.n_calibration_runs):
        x0, trace = calibrate_run(net, model_net, gt, algorithm, threshold, r, cfg)
        out = cfg.run_dir(algorithm, threshold, r)
        files.write_demand(out / "initial_demand.csv", x0)
        files.write_demand(out / "final_demand.csv", trace.best_x)
        files.write_trace(out / "trace.csv", trace)
        if algorithm == "metamodel":
            files.write_beta_snapshots(out / "beta.csv", trace)
        log.info("%s t=%g run %d: best loss %.5g", algorithm, threshold, r, trace.best_loss)
        traces.append(trace)
    return traces


REPORT_HEADER = ["threshold", "n_in", "n_out", "algorithm", "in_speed_nrmse", "in_count_nrmse",
                 "out_speed_nrmse", "out_count_nrmse"]
SCATTER_HEADER = ["segment_id", "gt_speed", "sim_speed_mean", "sim_speed_std"]


def cmd_report(cfg: ExperimentConfig) -> list[list]:
    """Table of run-mean nRMSE per (threshold, algorithm), plus scatter files.

    "initial" rows evaluate each run's starting demand, which all algorithms share.
    """
    net, _, gt = _calibration_inputs(cfg)
    algorithms = sorted(cfg.algorithms)
    rows = []
    for threshold in sorted(cfg.thresholds):
        tag = f"{threshold:g}"
        in_set = select_segments_by_congestion(gt, net, threshold)
        out_set = complement_set(gt, net, in_set)
        reports: dict[str, list] = {"initial": []}
        for r in range(cfg.n_calibration_runs):
            x0 = files.read_demand(_existing(cfg.run_dir(algorithms[0], threshold, r) / "initial_demand.csv"))
            seed = _rng.derive_seed(cfg.master_seed, "eval", "initial", tag, r)
            reports["initial"].append(
                evaluate_demands(net, x0, gt, in_set, out_set, cfg.final_eval_reps, seed, cfg.simulator))
        for algorithm in algorithms:
            results = []
            for r in range(cfg.n_calibration_runs):
                x = files.read_demand(_existing(cfg.run_dir(algorithm, threshold, r) / "final_demand.csv"))
                seeds = replication_seeds(cfg.master_seed, cfg.final_eval_reps, "eval", algorithm, tag, r)
                results.append(simulate_expected(net, x, seeds, cfg.simulator))
            reports[algorithm] = [set_metrics(net, res, gt, in_set, out_set) for res in results]
            files.write_rows(cfg.report_dir / f"scatter_{algorithm}_t{tag}.csv", SCATTER_HEADER,
                             [list(row.values()) for row in scatter_export(results, gt, net, in_set)])
        for algorithm in sorted(reports):
            rep = average_reports(reports[algorithm])
            rows.append([threshold, len(in_set), len(out_set), algorithm, rep.in_speed, rep.in_count,
                         rep.out_speed, rep.out_count])
    files.write_rows(cfg.report_dir / "table.csv", REPORT_HEADER, rows)
    return rows


def _existing(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run calibrate first")
    return path


def run_all(cfg: ExperimentConfig, generate: bool = False) -> list[list]:
    """gen-network (optional) -> gen-gt -> calibrate every (algorithm, threshold) -> report."""
    if generate:
        cmd_gen_network(cfg.generator, cfg.network_path)
    cmd_gen_gt(cfg)
    for algorithm in sorted(cfg.algorithms):
        for threshold in cfg.thresholds:
            cmd_calibrate(cfg, algorithm, threshold)
    return cmd_report(cfg)
