"""
Network, assignment matrix and the fundamental diagram
======================================================

Load the shipped demo network, map an OD demand vector to segment demand,
and look at the speed-demand curve of one segment.
"""

import numpy as np

from odcal import data_path
from odcal.fd import FdParams, FdSample, fd_speed, fd_speed_gradient, fit_fd_params
from odcal.network import build_assignment_matrix, load_network, map_demand, validate_network

net = load_network(data_path())
print(f"{net.n_od} OD pairs, {net.n_segments} segments, {int(net.routed_mask().sum())} on some route")
print("diagnostics:", validate_network(net) or "none")

# A[i, z] sums the probabilities of OD z's routes that traverse segment i
A = build_assignment_matrix(net)
x = 0.5 * net.x_upper
q = map_demand(A, x)
busiest = int(np.argmax(q / net.segment_array("q_max")))
seg = net.segments[busiest]
print(f"busiest segment {seg.id}: demand {q[busiest]:.0f} of capacity {seg.q_max:.0f} veh/h")

# speed falls from v_max at zero demand to v_min at capacity
p = FdParams.from_segment(seg)
for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
    qq = frac * p.q_max
    print(f"  q = {qq:7.1f}  v = {fd_speed(p, qq):6.3f} m/s  dv/dq = {fd_speed_gradient(p, qq):+.2e}")

# recover the exponents from noisy speed observations
rng = np.random.default_rng(0)
qs = rng.uniform(0.05, 0.95, 30) * p.q_max
vs = fd_speed(p, qs) + rng.normal(0, 0.1, qs.size)
a1, a2 = fit_fd_params([FdSample(a, b) for a, b in zip(qs, vs)], p.v_min, p.v_max, p.q_max)
print(f"true exponents ({p.alpha1}, {p.alpha2}), fitted ({a1:.3f}, {a2:.3f})")
