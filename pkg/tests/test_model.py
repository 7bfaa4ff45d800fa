import numpy as np
import pytest

from chordalloc import ctro, model, mw


@pytest.fixture(scope="module")
def ctro_problem():
    cfg = ctro.CtroConfig(n_states=3, n_landmarks=4, seed=1)
    inst = ctro.simulate(cfg)
    return inst, ctro.lift(inst)


def test_lift_point_ctro_layout():
    cfg = ctro.CtroConfig(n_states=2, n_landmarks=1, seed=0)
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    states = [np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0])] * 2
    pt = model.lift_point(prob, states)
    np.testing.assert_allclose(
        pt.local_vector(0), [1.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 14.0]
    )


def test_lift_point_zero_state():
    cfg = ctro.CtroConfig(n_states=2, n_landmarks=1, seed=0)
    prob = ctro.lift(ctro.simulate(cfg))
    pt = model.lift_point(prob, [np.zeros(6)] * 2)
    np.testing.assert_allclose(pt.local_vector(0), [1.0] + [0.0] * 7)


def test_lift_point_mw_no_substitution():
    cfg = mw.MwConfig(n_poses=1, n_landmarks=3, seed=0)
    inst = mw.simulate(cfg)
    prob = mw.lift(inst)
    raw = mw.state_to_raw(inst.gt_rotations[0], inst.gt_translations[0])
    pt = model.lift_point(prob, [raw])
    vec = pt.local_vector(0)
    assert vec.shape == (13,)
    assert vec[0] == 1.0
    np.testing.assert_allclose(vec[1:10], inst.gt_rotations[0].ravel(order="F"))


def test_lift_point_dimension_mismatch():
    cfg = ctro.CtroConfig(n_states=2, n_landmarks=1, seed=0)
    prob = ctro.lift(ctro.simulate(cfg))
    with pytest.raises(model.ModelError):
        model.lift_point(prob, [np.zeros(5), np.zeros(6)])


def test_zero_noise_cost_at_ground_truth():
    cfg = ctro.CtroConfig(
        n_states=3, n_landmarks=4, sigma_d_meas=0.0, sigma_a_true=0.0, seed=2
    )
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    assert abs(model.evaluate_cost(prob, pt)) < 1e-9


def test_cost_matches_direct_nls(ctro_problem):
    inst, prob = ctro_problem
    rng = np.random.default_rng(7)
    for _ in range(20):
        states = inst.gt_states + rng.normal(0.0, 0.4, size=inst.gt_states.shape)
        pt = model.lift_point(prob, list(states))
        lifted = model.evaluate_cost(prob, pt)
        direct = ctro.nls_cost(inst, states)
        assert abs(lifted - direct) <= 1e-10 * max(1.0, abs(direct))


def test_single_absolute_factor_h_squared():
    blocks = [model.VarBlock(index=0, state_dim=1, lift_dim=0)]
    Q = np.zeros((2, 2))
    Q[0, 0] = 1.0
    prob = model.LiftedProblem(
        blocks=blocks,
        cost_factors=[model.CostFactor(scope=(0,), matrix=Q)],
        constraint_factors=[model.homogenization_factor(0, 2)],
    )
    pt = model.lift_point(prob, [np.array([3.0])])
    assert model.evaluate_cost(prob, pt) == pytest.approx(1.0)


def test_constraint_residuals_ground_truth_feasible(ctro_problem):
    inst, prob = ctro_problem
    pt = model.lift_point(prob, list(inst.gt_states))
    assert np.abs(model.constraint_residuals(prob, pt)).max() < 1e-12


def test_substitution_residual_sign(ctro_problem):
    inst, prob = ctro_problem
    pt = model.lift_point(prob, list(inst.gt_states))
    # force the lifted coordinate to |t|^2 + 1: residual should be exactly +1
    pt.block_values[0][6] += 1.0
    res = model.constraint_residuals(prob, pt)
    sub_idx = [
        i for i, c in enumerate(prob.constraint_factors)
        if c.block == 0 and c.kind == "substitution"
    ][0]
    assert res[sub_idx] == pytest.approx(1.0, abs=1e-12)


def test_homogenization_residual_h2(ctro_problem):
    inst, prob = ctro_problem
    pt = model.lift_point(prob, list(inst.gt_states))
    pt.h = 2.0
    res = model.constraint_residuals(prob, pt)
    homog_idx = [
        i for i, c in enumerate(prob.constraint_factors)
        if c.block == 0 and c.kind == "homogenization"
    ][0]
    assert res[homog_idx] == pytest.approx(3.0)


def test_constraints_are_single_block(ctro_problem):
    _, prob = ctro_problem
    for c in prob.constraint_factors:
        assert isinstance(c.block, int)


def test_cost_factors_psd(ctro_problem):
    from chordalloc.symmat import min_eig

    _, prob = ctro_problem
    for f in prob.cost_factors:
        norm = max(1.0, np.abs(f.matrix).max())
        assert min_eig(f.matrix) >= -1e-10 * norm


def test_json_round_trip(ctro_problem):
    inst, prob = ctro_problem
    doc = model.to_json_dict(prob)
    assert set(doc) >= {"blocks", "cost_factors", "constraint_factors", "relative_scopes"}
    back = model.from_json_dict(doc, lift_state=prob.lift_state)
    assert back.n_blocks == prob.n_blocks
    assert back.relative_scopes == prob.relative_scopes
    pt = model.lift_point(prob, list(inst.gt_states))
    # matrices survive the round trip (basis factorization is not serialized,
    # so compare the quadratic forms directly)
    for f, g in zip(prob.cost_factors, back.cost_factors):
        np.testing.assert_allclose(f.matrix, g.matrix)
    res = model.constraint_residuals(back, pt)
    assert np.abs(res).max() < 1e-12


def test_validation_rejects_missing_homogenization():
    blocks = [model.VarBlock(index=0, state_dim=1, lift_dim=0)]
    with pytest.raises(model.ModelError):
        model.LiftedProblem(blocks=blocks)
