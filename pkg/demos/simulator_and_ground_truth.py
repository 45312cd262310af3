"""
The stochastic simulator and ground truth
=========================================

The simulator is the black box the calibration has to match. Switching its
noise, bias and spillback off recovers the analytical model exactly.
"""

import numpy as np

from odcal import data_path, fd
from odcal.network import build_assignment_matrix, load_network
from odcal.simulator import SimulatorConfig, generate_gt, generate_gt_demands, simulate, simulate_expected

net = load_network(data_path())
x = generate_gt_demands(net, seed=1)

# one replication is a pure function of (network, demand, seed, config)
a = simulate(net, x, seed=3)
b = simulate(net, x, seed=3)
print("same seed reproduces bit for bit:", np.array_equal(a.speeds, b.speeds))

# averaging replications shrinks the noise
five = simulate_expected(net, x, seeds=range(5))
print(f"mean per-segment speed std over 5 replications: {five.rep_speeds.std(axis=0).mean():.3f} m/s")

# the degenerate simulator equals the diagram evaluated at A x
off = simulate(net, x, 0, SimulatorConfig.noise_free())
q = build_assignment_matrix(net) @ x
analytic = fd.speed(q, net.segment_array("v_min"), net.segment_array("v_max"), net.segment_array("q_max"),
                    net.segment_array("fd_alpha1"), net.segment_array("fd_alpha2"))
print(f"max |noise-free simulator - analytical model| = {np.max(np.abs(off.speeds - analytic)):.1e}")

# ground truth: 10 replications at the held-out GT demand
gt = generate_gt(net, x, n_reps=10, seed=1)
ratio = gt.gt_speed / net.segment_array("v_max")
routed = net.routed_mask()
for t in (0.8, 0.9, 1.0):
    print(f"segments with speed/limit <= {t}: {int(np.sum((ratio <= t) & routed))}")
