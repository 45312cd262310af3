"""
Calibrating OD demand: metamodel versus SPSA
============================================

Both methods get the same 250-evaluation budget and the same random start.
The metamodel couples the analytical loss with a linear correction refitted
every epoch; SPSA only sees simulated losses.
"""

import numpy as np

from odcal import data_path
from odcal.evaluation import complement_set, evaluate_demands, gt_weights, select_segments_by_congestion
from odcal.experiment import fit_analytical_network
from odcal.metamodel import AnalyticalModel
from odcal.network import build_assignment_matrix, load_network
from odcal.simulator import SimulatorConfig, generate_gt, generate_gt_demands
from odcal.solvers import (EvaluationBudget, OptimizerConfig, SpsaConfig, calibrate_spsa, metamodel_search,
                           simulation_loss_fn)

net = load_network(data_path())
sim = SimulatorConfig()
gt = generate_gt(net, generate_gt_demands(net, 1), n_reps=10, seed=1, cfg=sim)
in_set = select_segments_by_congestion(gt, net, 0.9)
out_set = complement_set(gt, net, in_set)
print(f"{len(in_set)} in-sample segments, {len(out_set)} held out")

# the analytical model's exponents are refitted to simulated traffic first
model_net = fit_analytical_network(net, sim, n_samples=40)
weights = gt_weights(net, gt)
model = AnalyticalModel(model_net, build_assignment_matrix(model_net), gt, weights, in_set)

x0 = np.random.default_rng(5).uniform(0, 1, net.n_od) * net.x_upper
loss = simulation_loss_fn(net, gt, in_set, sim, weights)
meta = metamodel_search(model, loss, x0, EvaluationBudget(250), OptimizerConfig(seed=5))
spsa = calibrate_spsa(net, gt, in_set, 250, SpsaConfig(seed=5), sim, x0=x0)

for name, x in (("initial", x0), ("metamodel", meta.best_x), ("spsa", spsa.best_x)):
    rep = evaluate_demands(net, x, gt, in_set, out_set, n_reps=5, seed=9, cfg=sim)
    print(f"{name:>9}: in-sample speed nRMSE {rep.in_speed:.3f}, count nRMSE {rep.in_count:.3f}, "
          f"out-of-sample speed nRMSE {rep.out_speed:.3f}")
