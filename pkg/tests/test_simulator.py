import numpy as np
import pytest

from odcal import fd
from odcal.network import build_assignment_matrix, load_network
from odcal.simulator import (SimulatorConfig, generate_gt, generate_gt_demands, simulate, simulate_expected)

from conftest import tiny_doc

OFF = SimulatorConfig.noise_free()


def analytic_speeds(net, x):
    q = build_assignment_matrix(net) @ x
    return fd.speed(q, net.segment_array("v_min"), net.segment_array("v_max"), net.segment_array("q_max"),
                    net.segment_array("fd_alpha1"), net.segment_array("fd_alpha2"))


def test_config_validation():
    with pytest.raises(ValueError):
        SimulatorConfig(demand_noise="gauss")
    with pytest.raises(ValueError):
        SimulatorConfig(speed_noise_sigma=-0.1)
    with pytest.raises(ValueError):
        SimulatorConfig(spillback_coupling=1.5)


def test_determinism(demo_net):
    x = 0.5 * demo_net.x_upper
    a = simulate(demo_net, x, 11)
    b = simulate(demo_net, x, 11)
    assert np.array_equal(a.speeds, b.speeds) and np.array_equal(a.counts, b.counts)
    c = simulate(demo_net, x, 12)
    assert not np.array_equal(a.speeds, c.speeds)


def test_zero_demand(demo_net):
    x = np.zeros(demo_net.n_od)
    res = simulate(demo_net, x, 3, OFF)
    assert np.all(res.counts == 0)
    assert np.array_equal(res.speeds, demo_net.segment_array("v_max"))
    noisy = simulate(demo_net, x, 3)
    assert np.all(noisy.counts == 0)
    assert np.all(noisy.speeds <= demo_net.segment_array("v_max"))


def test_degenerates_to_analytical_model(demo_net, rng):
    for _ in range(5):
        x = rng.uniform(0, 1, demo_net.n_od) * demo_net.x_upper
        res = simulate(demo_net, x, 0, OFF)
        np.testing.assert_allclose(res.speeds, analytic_speeds(demo_net, x), rtol=0, atol=1e-12)
        assert np.array_equal(res.counts, build_assignment_matrix(demo_net) @ x)


def test_monotone_load(demo_net, rng):
    # spillback off: a load change can switch a segment's spillback source to a lighter one
    cfg = SimulatorConfig(demand_noise="none", speed_noise_sigma=0.0, param_bias_scale=0.15, spillback_coupling=0.0)
    x = rng.uniform(0, 0.8, demo_net.n_od) * demo_net.x_upper
    base = simulate(demo_net, x, 0, cfg).speeds
    for z in range(demo_net.n_od):
        y = x.copy()
        y[z] += 0.1 * demo_net.x_upper[z]
        assert np.all(simulate(demo_net, y, 0, cfg).speeds <= base + 1e-12)


def test_ranges(demo_net, rng):
    x = rng.uniform(0, 1, demo_net.n_od) * demo_net.x_upper
    res = simulate(demo_net, x, 5, SimulatorConfig(speed_noise_sigma=0.5))
    assert np.all(res.speeds >= 0) and np.all(res.speeds <= demo_net.segment_array("v_max"))
    assert np.all(res.counts >= 0)


def test_bound_violation(demo_net):
    with pytest.raises(ValueError):
        simulate(demo_net, demo_net.x_upper * 1.01, 0)
    with pytest.raises(ValueError):
        simulate(demo_net, -np.ones(demo_net.n_od), 0)


def test_expected_single_seed_equals_simulate(demo_net):
    x = 0.4 * demo_net.x_upper
    one = simulate(demo_net, x, 9)
    exp = simulate_expected(demo_net, x, [9])
    assert np.array_equal(one.speeds, exp.speeds) and np.array_equal(one.counts, exp.counts)


def test_expected_noise_free_equals_single_run(demo_net):
    x = 0.4 * demo_net.x_upper
    one = simulate(demo_net, x, 0, OFF)
    exp = simulate_expected(demo_net, x, [1, 2, 3, 4], OFF)
    assert np.array_equal(one.speeds, exp.speeds)
    assert exp.rep_speeds.shape == (4, demo_net.n_segments)


def test_expected_empty_seeds(demo_net):
    with pytest.raises(ValueError):
        simulate_expected(demo_net, np.zeros(demo_net.n_od), [])


def test_poisson_mean_clt():
    doc = tiny_doc()
    doc["od_pairs"][0]["routes"] = [{"segments": ["a", "b"], "prob": 1.0}]
    net = load_network(doc)
    res = simulate_expected(net, [400.0], list(range(100)))
    i = net.segment_index("a")
    assert abs(res.counts[i] - 400.0) <= 3 * np.sqrt(400) / np.sqrt(100)


def test_multinomial_split_conserves_demand(tiny_net):
    res = simulate(tiny_net, [700.0], 4)
    a, b, c = (res.counts[tiny_net.segment_index(s)] for s in "abc")
    assert a == b + c
    assert a == int(a)


def test_spillback_tie_goes_to_lowest_id():
    doc = tiny_doc()
    doc["od_pairs"][0]["routes"] = [{"segments": ["a", "c"], "prob": 0.5}, {"segments": ["a", "b"], "prob": 0.5}]
    net = load_network(doc)
    for s in doc["segments"]:
        s["q_max_vph"] = 10000.0
    doc["segments"][1]["q_max_vph"] = 800.0   # b is tighter, so a's speed tells us whose demand spilled
    net = load_network(doc)
    cfg = SimulatorConfig(demand_noise="none", speed_noise_sigma=0.0, param_bias_scale=0.0, spillback_coupling=1.0)
    res = simulate(net, [600.0], 0, cfg)
    # equal route flows: spillback into a comes from b (lowest id); q_eff(a) = 600 + 300
    assert res.speeds[0] == pytest.approx(fd.speed(900.0, 2.0, 15.0, 10000.0, 2.0, 1.0), abs=1e-12)


def test_bias_depends_only_on_bias_seed(demo_net):
    x = 0.5 * demo_net.x_upper
    base = dict(demand_noise="none", speed_noise_sigma=0.0, spillback_coupling=0.0)
    a = simulate(demo_net, x, 0, SimulatorConfig(**base, bias_seed=1)).speeds
    b = simulate(demo_net, x, 99, SimulatorConfig(**base, bias_seed=1)).speeds
    c = simulate(demo_net, x, 0, SimulatorConfig(**base, bias_seed=2)).speeds
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_generate_gt(demo_net):
    x = generate_gt_demands(demo_net, 1)
    gt = generate_gt(demo_net, x, n_reps=10, seed=1)
    assert gt.n_replications == 10
    np.testing.assert_allclose(gt.gt_speed, gt.rep_speeds.mean(axis=0), rtol=1e-15)
    again = generate_gt(demo_net, x, n_reps=10, seed=1)
    assert np.array_equal(gt.gt_speed, again.gt_speed) and np.array_equal(gt.gt_count, again.gt_count)
    one = generate_gt(demo_net, x, n_reps=1, cfg=OFF)
    np.testing.assert_allclose(one.gt_speed, analytic_speeds(demo_net, x), atol=1e-12)
    with pytest.raises(ValueError):
        generate_gt(demo_net, x, n_reps=0)


def test_gt_demands(demo_net):
    ub = demo_net.x_upper
    for seed in range(10):
        x = generate_gt_demands(demo_net, seed)
        assert np.all(x >= 0.3 * ub) and np.all(x <= 0.8 * ub)
        assert np.array_equal(x, generate_gt_demands(demo_net, seed))
        assert not np.array_equal(x, generate_gt_demands(demo_net, seed + 100))
