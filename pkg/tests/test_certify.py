import numpy as np
import pytest

from chordalloc import certify, chordal, ctro, dsdp, mw
from chordalloc.certify import AccuracyReport, accuracy, evr, extract_state
from chordalloc.geometry import rot_z
from chordalloc.solver import SolverSettings


def test_evr_rank_one_clamped():
    x = np.array([1.0, 2.0, -1.0])
    assert evr(np.outer(x, x)) >= 1e14


def test_evr_examples():
    assert evr(np.diag([2.0, 1.0])) == pytest.approx(2.0)
    assert evr(np.diag([1.0, 1.0])) == pytest.approx(1.0)


def test_evr_degenerate_raises():
    with pytest.raises(certify.DegenerateSolutionError):
        evr(np.diag([-1.0, -2.0]))


def _rank_one_result(prob, x):
    dec = chordal.manual_chain_decomposition(prob)
    mats, semantics = [], []
    for members in dec.cliques:
        sem = [0]
        for k in members:
            off = prob.block_offset(k)
            sem.extend(range(off, off + prob.blocks[k].width))
        sem = np.asarray(sem)
        semantics.append(sem)
        mats.append(np.outer(x[sem], x[sem]))
    entries, gap = dsdp.stitch(mats, semantics)
    return dsdp.DsdpResult(
        solution=None, clique_matrices=mats, block_semantics=semantics,
        decomposition=dec, stitched=entries, objective=0.0, solve_time=0.0,
        overlap_gap=gap,
    )


def test_exact_recovery_from_consistent_rank_one_cliques():
    from chordalloc import model

    inst = ctro.simulate(ctro.CtroConfig(n_states=4, n_landmarks=3, seed=1))
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    x = pt.full_vector()
    res = _rank_one_result(prob, x)
    states, cert = extract_state(res, prob)
    assert np.abs(states - inst.gt_states).max() < 1e-12
    assert cert.evr >= 1e14
    assert cert.extraction_residual < 1e-10


def test_extraction_invariant_to_sign_flip():
    from chordalloc import model

    inst = ctro.simulate(ctro.CtroConfig(n_states=3, n_landmarks=3, seed=2))
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    x = -pt.full_vector()  # global sign flip: same rank-one matrix
    res = _rank_one_result(prob, x)
    states, _ = extract_state(res, prob)
    assert np.abs(states - inst.gt_states).max() < 1e-12


def test_mw_extraction_returns_orthonormal_rotations():
    cfg = mw.MwConfig(n_poses=3, n_landmarks=5, sigma_u=2.0, sigma_v=2.0, seed=3)
    prob = mw.lift(mw.simulate(cfg))
    res = dsdp.solve_dsdp(prob, settings=SolverSettings(tol=1e-9))
    (rots, trans), cert = extract_state(res, prob)
    for C in rots:
        assert np.abs(C.T @ C - np.eye(3)).max() < 1e-12


def test_tight_solution_certificate():
    cfg = ctro.CtroConfig(n_states=4, n_landmarks=5, seed=4)
    inst = ctro.simulate(cfg)
    prob = ctro.lift(inst)
    res = dsdp.solve_dsdp(prob, settings=SolverSettings(tol=1e-10))
    states, cert = extract_state(res, prob)
    assert cert.evr > 1e6
    assert cert.extraction_residual < 1e-6
    nls = ctro.nls_cost(inst, states)
    assert abs(nls - res.objective) <= 1e-6 * (1 + abs(res.objective))


def test_accuracy_exact_match_is_zero():
    est = np.ones((3, 6))
    rep = accuracy(est, est.copy(), "ctro")
    assert rep.pos_rmse == 0.0 and rep.vel_rmse == 0.0


def test_accuracy_chordal_distance_180deg():
    C_est = np.stack([rot_z(np.pi)])
    C_gt = np.stack([np.eye(3)])
    rep = accuracy((C_est, np.zeros((1, 3))), (C_gt, np.zeros((1, 3))), "mw")
    assert rep.rot_rmse == pytest.approx(2.0 * np.sqrt(2.0))


def test_accuracy_translation_offset():
    est = (np.stack([np.eye(3)]), np.array([[3.0, 4.0, 0.0]]))
    gt = (np.stack([np.eye(3)]), np.zeros((1, 3)))
    rep = accuracy(est, gt, "mw")
    assert rep.pos_rmse == pytest.approx(5.0)


def test_extraction_failure_on_zero_h():
    from chordalloc import model

    inst = ctro.simulate(ctro.CtroConfig(n_states=3, n_landmarks=3, seed=5))
    prob = ctro.lift(inst)
    pt = model.lift_point(prob, list(inst.gt_states))
    x = pt.full_vector()
    x[0] = 0.0  # kill the homogenization coordinate
    res = _rank_one_result(prob, x)
    with pytest.raises(certify.ExtractionError):
        extract_state(res, prob)
