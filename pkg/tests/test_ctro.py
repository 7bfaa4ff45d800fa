import json

import numpy as np
import pytest

from chordalloc import ctro, model


def test_noiseless_squared_distances_exact():
    cfg = ctro.CtroConfig(n_states=4, n_landmarks=5, sigma_d_meas=0.0, seed=0)
    inst = ctro.simulate(cfg)
    for k, node in enumerate(inst.measurements):
        for i, d2 in node:
            true = np.sum((inst.gt_states[k, :3] - inst.landmarks[i]) ** 2)
            assert d2 == pytest.approx(true, abs=0.0)


def test_times_sorted_in_range():
    cfg = ctro.CtroConfig(n_states=12, n_landmarks=3, seed=4)
    inst = ctro.simulate(cfg)
    assert np.all(np.diff(inst.times) >= 0)
    assert inst.times[0] >= 0.0 and inst.times[-1] <= cfg.n_states - 1


def test_noise_moment():
    # empirical STD of (d~^2 - d^2) over many draws matches the configured value
    cfg = ctro.CtroConfig(n_states=10, n_landmarks=10, sigma_d_meas=0.10, seed=11)
    diffs = []
    for seed in range(100):
        inst = ctro.simulate(ctro.CtroConfig(
            n_states=10, n_landmarks=10, sigma_d_meas=0.10, seed=seed))
        for k, node in enumerate(inst.measurements):
            for i, d2 in node:
                true = np.sum((inst.gt_states[k, :3] - inst.landmarks[i]) ** 2)
                diffs.append(d2 - true)
    std = np.std(diffs)
    assert len(diffs) >= 10**4
    assert abs(std - 0.10) < 0.05 * 0.10


def test_trajectory_inside_cube():
    for seed in range(5):
        cfg = ctro.CtroConfig(n_states=20, n_landmarks=3, seed=seed)
        inst = ctro.simulate(cfg)
        assert np.abs(inst.gt_states[:, :3]).max() <= cfg.cube_side / 2 + 1e-12


def test_containment_reject_mode_errors_for_large_n():
    cfg = ctro.CtroConfig(
        n_states=120, n_landmarks=3, seed=0, containment="reject",
        max_containment_retries=3,
    )
    with pytest.raises(ctro.GenerationError):
        ctro.simulate(cfg)


def test_containment_auto_reflects_for_large_n():
    cfg = ctro.CtroConfig(n_states=120, n_landmarks=3, seed=0)
    inst = ctro.simulate(cfg)
    assert np.abs(inst.gt_states[:, :3]).max() <= cfg.cube_side / 2 + 1e-12


def test_gp_prior_transition_limit():
    Phi, _ = ctro.gp_prior_terms(0.0, 1e-9, 0.2)
    np.testing.assert_allclose(Phi, np.eye(6), atol=1e-8)


def test_gp_prior_transition_arithmetic():
    Phi, _ = ctro.gp_prior_terms(0.0, 1.0, 0.2)
    x = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(Phi @ x, [2.0, 0.0, 0.0, 1.0, 0.0, 0.0])


@pytest.mark.parametrize("dt", [0.1, 1.0, 3.0])
def test_gp_prior_weight_is_inverse_covariance(dt):
    _, W = ctro.gp_prior_terms(0.0, dt, 0.2)
    Q = ctro.process_noise_cov(dt, 0.2)
    np.testing.assert_allclose(W @ Q, np.eye(6), atol=1e-10)


def test_gp_prior_weight_positive_definite():
    from chordalloc.symmat import min_eig

    _, W = ctro.gp_prior_terms(0.3, 1.7, 0.2)
    assert np.abs(W - W.T).max() == 0.0
    assert min_eig(W) > 0


def test_gp_prior_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        ctro.gp_prior_terms(1.0, 1.0, 0.2)


def test_lift_measurement_rows_match_residuals():
    cfg = ctro.CtroConfig(n_states=3, n_landmarks=4, seed=3)
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    sqrt_w = cfg.sigma_d_prior**-1
    for k, node in enumerate(inst.measurements):
        x = pt.local_vector(k)
        factor = [f for f in prob.cost_factors if f.scope == (k,)][0]
        for r, (i, d2) in enumerate(node):
            res_direct = d2 - np.sum((inst.gt_states[k, :3] - inst.landmarks[i]) ** 2)
            row = factor.basis[r] @ x / sqrt_w
            assert abs(row - res_direct) < 1e-12 * max(1.0, abs(d2))


def test_lift_constraint_count_per_node():
    cfg = ctro.CtroConfig(n_states=4, n_landmarks=2, seed=1)
    prob = ctro.lift(ctro.simulate(cfg))
    for k in range(4):
        kinds = sorted(c.kind for c in prob.constraint_factors if c.block == k)
        assert kinds == ["homogenization", "substitution"]


def test_lift_zero_noise_cost_zero():
    cfg = ctro.CtroConfig(
        n_states=4, n_landmarks=4, sigma_d_meas=0.0, sigma_a_true=0.0, seed=5
    )
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    assert abs(model.evaluate_cost(prob, pt)) < 1e-9


def test_lift_chain_scopes():
    cfg = ctro.CtroConfig(n_states=5, n_landmarks=2, seed=1)
    prob = ctro.lift(ctro.simulate(cfg))
    assert prob.relative_scopes == [(k, k + 1) for k in range(4)]


def test_lifted_ground_truth_feasible():
    cfg = ctro.CtroConfig(n_states=5, n_landmarks=3, seed=8)
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    assert np.abs(model.constraint_residuals(prob, pt)).max() < 1e-12


def test_noisy_cost_matches_direct_evaluation():
    cfg = ctro.CtroConfig(n_states=4, n_landmarks=3, seed=9)
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    lifted = model.evaluate_cost(prob, pt)
    direct = ctro.nls_cost(inst, inst.gt_states)
    assert abs(lifted - direct) <= 1e-10 * max(1.0, abs(direct))


def test_measurement_dropout():
    cfg = ctro.CtroConfig(n_states=8, n_landmarks=10, meas_dropout=0.5, seed=2)
    inst = ctro.simulate(cfg)
    count = sum(len(node) for node in inst.measurements)
    assert count < 8 * 10


def test_json_round_trip(tmp_path):
    cfg = ctro.CtroConfig(n_states=4, n_landmarks=3, seed=6)
    inst = ctro.simulate(cfg)
    path = tmp_path / "inst.json"
    ctro.save_json(inst, str(path))
    with open(path) as f:
        assert json.load(f)["problem"] == "ctro"
    back = ctro.load_json(str(path))
    np.testing.assert_allclose(back.gt_states, inst.gt_states)
    np.testing.assert_allclose(back.times, inst.times)
    assert back.measurements == inst.measurements
    assert ctro.nls_cost(back, back.gt_states) == pytest.approx(
        ctro.nls_cost(inst, inst.gt_states)
    )
