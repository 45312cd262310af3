import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odcal.evaluation import gt_weights
from odcal.metamodel import (AnalyticalModel, FitConfig, MetamodelParams, SamplePoint, SampleSet, analytical_loss,
                             analytical_loss_gradient, fit_metamodel, fit_objective_gradient, metamodel_predict,
                             simulated_loss)
from odcal.network import build_assignment_matrix, load_network
from odcal.simulator import GroundTruth, SimulationResult, SimulatorConfig, generate_gt, generate_gt_demands

from conftest import tiny_doc


def one_segment_net(q_max=1800.0):
    doc = tiny_doc()
    doc["segments"] = [dict(doc["segments"][0], q_max_vph=q_max)]
    doc["od_pairs"][0]["routes"] = [{"segments": ["a"], "prob": 1.0}]
    return load_network(doc)


def make_gt(net, speeds, counts=None):
    speeds = np.asarray(speeds, float)
    counts = np.zeros_like(speeds) if counts is None else np.asarray(counts, float)
    return GroundTruth(net.segment_ids, speeds, counts, speeds[None, :])


@pytest.fixture(scope="module")
def demo_setup(demo_net):
    x_gt = generate_gt_demands(demo_net, 3)
    gt = generate_gt(demo_net, x_gt, n_reps=1, cfg=SimulatorConfig.noise_free())
    ids = [s for s, k in zip(demo_net.segment_ids, demo_net.routed_mask()) if k]
    A = build_assignment_matrix(demo_net)
    return AnalyticalModel(demo_net, A, gt, gt_weights(demo_net, gt), ids), x_gt


def test_hand_value_loss():
    net = one_segment_net()
    # v^a = 8 requires 15 - 13 r^2 = 8
    x = 1800.0 * np.sqrt(7.0 / 13.0)
    gt = make_gt(net, [10.0])
    val = analytical_loss(net, build_assignment_matrix(net), gt, [0.5], [x], ["a"])
    assert val == pytest.approx(2.0, rel=1e-12)


def test_zero_at_truth(demo_setup):
    model, x_gt = demo_setup
    assert model.loss(x_gt) <= 1e-12
    assert np.max(np.abs(model.gradient(x_gt))) <= 1e-12


def test_zero_weights(demo_net, demo_setup):
    model, _ = demo_setup
    A = build_assignment_matrix(demo_net)
    gt = make_gt(demo_net, np.full(demo_net.n_segments, 5.0))
    w = np.zeros(demo_net.n_segments)
    for x in (np.zeros(demo_net.n_od), demo_net.x_upper):
        assert analytical_loss(demo_net, A, gt, w, x, demo_net.segment_ids) == 0.0


def test_empty_set(demo_net):
    gt = make_gt(demo_net, np.ones(demo_net.n_segments))
    with pytest.raises(ValueError):
        AnalyticalModel(demo_net, build_assignment_matrix(demo_net), gt, np.ones(demo_net.n_segments), [])


def test_gradient_matches_finite_differences(demo_net, rng):
    A = build_assignment_matrix(demo_net)
    gt = generate_gt(demo_net, generate_gt_demands(demo_net, 8), n_reps=2, seed=8)
    ids = [s for s, k in zip(demo_net.segment_ids, demo_net.routed_mask()) if k]
    model = AnalyticalModel(demo_net, A, gt, gt_weights(demo_net, gt), ids)
    ub = demo_net.x_upper
    h = 1e-3 * ub
    for _ in range(20):
        x = rng.uniform(0.05, 0.95, demo_net.n_od) * ub
        g = model.gradient(x)
        fdiff = np.array([(model.loss(x + h[z] * e) - model.loss(x - h[z] * e)) / (2 * h[z])
                          for z, e in enumerate(np.eye(demo_net.n_od))])
        assert np.max(np.abs(g - fdiff)) / np.max(np.abs(fdiff)) < 1e-5


def test_wrappers_agree(demo_net, demo_setup):
    model, x_gt = demo_setup
    x = 0.9 * x_gt
    args = (demo_net, build_assignment_matrix(demo_net), model_gt(demo_setup), model_w(demo_setup))
    ids = [demo_net.segment_ids[i] for i in model.idx]
    assert analytical_loss(*args, x, ids) == pytest.approx(model.loss(x), rel=1e-14)
    np.testing.assert_allclose(analytical_loss_gradient(*args, x, ids), model.gradient(x), rtol=1e-14)
    f, g = model.loss_and_grad(x)
    assert f == pytest.approx(model.loss(x), rel=1e-14)


def model_gt(setup):
    model, _ = setup
    speeds = np.zeros(model.net.n_segments)
    speeds[model.idx] = model.v_gt
    return make_gt(model.net, speeds)


def model_w(setup):
    model, _ = setup
    w = np.zeros(model.net.n_segments)
    w[model.idx] = model.w
    return w


def test_untouched_od_has_zero_gradient():
    doc = tiny_doc()
    doc["segments"].append(dict(doc["segments"][0], id="d"))
    doc["od_pairs"].append({"id": 2, "origin": "p", "dest": "q", "x_upper_vph": 500.0,
                            "routes": [{"segments": ["d"], "prob": 1.0}]})
    net = load_network(doc)
    gt = make_gt(net, [7.0, 9.0, 9.0, 9.0])
    g = analytical_loss_gradient(net, build_assignment_matrix(net), gt, np.full(4, 0.4), [500.0, 200.0],
                                 ["a", "b", "c"])
    assert g[1] == 0.0 and g[0] != 0.0


def test_continuous_and_finite_over_box(demo_setup, rng):
    model, _ = demo_setup
    ub = model.x_upper
    for x in [np.zeros_like(ub), ub, *(rng.uniform(0, 1, ub.size) * ub for _ in range(20))]:
        f, g = model.loss_and_grad(x)
        assert np.isfinite(f) and f >= 0 and np.all(np.isfinite(g))


def test_predict_identities():
    x = np.array([3.0, 4.0])
    assert metamodel_predict(MetamodelParams.prior(2), x, 0.37) == 0.37
    assert metamodel_predict(MetamodelParams(np.array([0.0, 2.5, 0.0, 0.0])), x, 0.37) == 2.5
    assert metamodel_predict(MetamodelParams(np.array([2.0, 1.0, 3.0])), [4.0], 0.5) == 14.0
    with pytest.raises(ValueError):
        metamodel_predict(MetamodelParams.prior(3), x, 0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=6), st.floats(0, 1e3))
def test_pure_physics_prediction(x, f_a):
    assert metamodel_predict(MetamodelParams.prior(len(x)), x, f_a) == f_a


def random_samples(rng, n, n_od, loss_of, scale=1000.0):
    s = SampleSet()
    for _ in range(n):
        x = rng.uniform(0, scale, n_od)
        f_a = rng.uniform(0, 5)
        s.add(SamplePoint(x, loss_of(x, f_a), f_a))
    return s


def test_fit_round_trip_physics_only(rng):
    s = random_samples(rng, 10, 3, lambda x, f: f)
    beta = fit_metamodel(s, np.zeros(3), FitConfig(ridge_weight=0.0)).beta
    np.testing.assert_allclose(beta, [1, 0, 0, 0, 0], atol=1e-8)


def test_fit_round_trip_general(rng):
    # distance weights decay with ||x_j - x_current||, so a compact design keeps the ridge pull negligible
    s = random_samples(rng, 30, 3, lambda x, f: 2 * f + 3 + 0.5 * x[0], scale=50.0)
    beta = fit_metamodel(s, s.points[0].x, FitConfig(ridge_weight=1e-8)).beta
    np.testing.assert_allclose(beta, [2, 3, 0.5, 0, 0], atol=1e-6)


def test_fit_matches_normal_equations(rng):
    s = random_samples(rng, 9, 3, lambda x, f: f + rng.normal(0, 0.5))
    cfg = FitConfig(ridge_weight=0.3)
    x_cur = s.points[0].x
    F = np.array([[p.f_a, 1.0, *p.x] for p in s])
    L = np.array([p.loss for p in s])
    lam = 1.0 / (1.0 + np.linalg.norm(F[:, 2:] - x_cur, axis=1))
    prior = np.array([1.0, 0, 0, 0, 0])
    lhs = F.T @ (lam[:, None] * F) + cfg.ridge_weight * np.eye(5)
    expected = np.linalg.solve(lhs, F.T @ (lam * L) + cfg.ridge_weight * prior)
    np.testing.assert_allclose(fit_metamodel(s, x_cur, cfg).beta, expected, rtol=1e-8, atol=1e-10)


def test_single_sample_shrinks_toward_prior():
    s = SampleSet([SamplePoint(np.array([100.0, 50.0]), 4.0, 1.0)])
    params = fit_metamodel(s, np.array([100.0, 50.0]))
    pred = params.predict(s.points[0].x, 1.0)
    assert 1.0 < pred < 4.0
    assert abs(params.beta[0] - 1.0) < 1.0


def test_fit_optimality(rng):
    s = random_samples(rng, 15, 4, lambda x, f: f + rng.normal(0, 0.1))
    cfg = FitConfig()
    x_cur = s.points[3].x
    beta = fit_metamodel(s, x_cur, cfg).beta
    assert np.max(np.abs(fit_objective_gradient(s, x_cur, cfg, beta))) < 1e-8


def test_fit_without_distance_weighting(rng):
    s = random_samples(rng, 8, 2, lambda x, f: 1.5 * f + 2)
    b = fit_metamodel(s, np.zeros(2), FitConfig(ridge_weight=0.0, distance_weighting=False)).beta
    np.testing.assert_allclose(b, [1.5, 2, 0, 0], atol=1e-8)


def test_sample_set_deduplicates():
    s = SampleSet()
    assert s.add(SamplePoint(np.array([1.0, 2.0]), 0.0, 0.0))
    assert not s.add(SamplePoint(np.array([1.0, 2.0 + 1e-10]), 1.0, 1.0))
    assert s.add(SamplePoint(np.array([1.0, 2.0 + 1e-6]), 1.0, 1.0))
    assert len(s) == 2


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(ridge_weight=-1.0)
    with pytest.raises(ValueError):
        fit_metamodel(SampleSet(), np.zeros(2))


def sim_result(speeds):
    v = np.asarray(speeds, float)
    return SimulationResult(v, np.zeros_like(v), (0,), np.zeros(1), v[None, :], v[None, :])


def test_simulated_loss_hand_value(tiny_net):
    gt = make_gt(tiny_net, [12.0, 9.0, 9.0])
    res = sim_result([10.0, 9.0, 9.0])
    assert simulated_loss(res, gt, [0.2, 0.3, 0.3], ["a"], tiny_net) == pytest.approx(0.8, rel=1e-15)
    assert simulated_loss(sim_result([12.0, 9.0, 9.0]), gt, [0.2, 0.3, 0.3], ["a", "b"], tiny_net) == 0.0
    # zero-weight segment only changes the normalization
    two = simulated_loss(res, gt, [0.2, 0.0, 0.3], ["a", "b"], tiny_net)
    assert two == pytest.approx(0.4, rel=1e-15)
    with pytest.raises(ValueError):
        simulated_loss(res, gt, [1, 1, 1], [], tiny_net)
    with pytest.raises(KeyError):
        simulated_loss(res, gt, [1, 1, 1], ["zz"], tiny_net)
