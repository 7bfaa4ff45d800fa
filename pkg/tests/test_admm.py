import numpy as np
import pytest

from chordalloc import admm, ctro, dsdp, solver
from chordalloc.admm import AdmmConfig, ConsensusAdmm, dual_update, penalty_adapt
from chordalloc.solver import SolverSettings
from chordalloc.symmat import vech


@pytest.fixture(scope="module")
def tiny_problem():
    # moderate weights keep the ADMM inner-solver amplification small
    cfg = ctro.CtroConfig(n_states=3, n_landmarks=5, sigma_d_prior=0.1, seed=5)
    return ctro.lift(ctro.simulate(cfg))


@pytest.fixture(scope="module")
def tiny_reference(tiny_problem):
    return dsdp.solve_dsdp(tiny_problem, settings=SolverSettings(tol=1e-10))


@pytest.fixture(scope="module")
def single_clique_problem():
    cfg = ctro.CtroConfig(n_states=2, n_landmarks=5, sigma_d_prior=0.1, seed=6)
    return ctro.lift(ctro.simulate(cfg))


def test_subproblem_tracks_consensus_under_large_rho(tiny_problem, tiny_reference):
    work = ConsensusAdmm(tiny_problem)
    # feasible consensus target from the centralized solution
    z = np.zeros(work.n_z)
    for t, C in enumerate(tiny_reference.clique_matrices):
        prog = work.program
        d = prog.coordinate_scales[prog.block_semantics[t]]
        z[work.selectors[t]] = vech(C / np.outer(d, d))
    lam = np.zeros_like(work.sub_cost[0])
    c0 = work.clique_subproblem(0, z, lam, 1e8, SolverSettings(tol=1e-6))
    assert np.abs(c0 - z[work.selectors[0]]).max() < 1e-3


def test_subproblem_small_rho_approaches_bare_clique(single_clique_problem):
    # one clique: the bare clique program IS the decomposed problem
    ref = dsdp.solve_dsdp(single_clique_problem, settings=SolverSettings(tol=1e-9))
    work = ConsensusAdmm(single_clique_problem)
    z = np.zeros(work.n_z)
    lam = np.zeros_like(work.sub_cost[0])
    c0 = work.clique_subproblem(0, z, lam, 1e-6, SolverSettings(tol=1e-9))
    obj = float(work.sub_cost[0] @ c0) * work.cost_scale + work.program.objective_offset
    assert abs(obj - ref.objective) <= 1e-3 * (1 + abs(ref.objective))


def test_consensus_update_examples():
    work = object.__new__(ConsensusAdmm)
    work.n_z = 3
    work.selectors = [np.array([0, 1]), np.array([1, 2])]
    work.counts = np.array([1.0, 2.0, 1.0])
    rho = 2.0
    c_list = [np.array([5.0, 1.0]), np.array([3.0, 7.0])]
    lambdas = [np.zeros(2), np.zeros(2)]
    z = ConsensusAdmm.consensus_update(work, c_list, lambdas, rho)
    np.testing.assert_allclose(z, [5.0, 2.0, 7.0])  # singles copied, shared averaged


def test_consensus_update_rank_one_consistent(tiny_problem):
    work = ConsensusAdmm(tiny_problem)
    rng = np.random.default_rng(0)
    x = rng.normal(size=1 + sum(b.width for b in tiny_problem.blocks))
    x[0] = 1.0
    c_list = []
    for t, sem in enumerate(work.program.block_semantics):
        c_list.append(vech(np.outer(x[sem], x[sem])))
    lambdas = [np.zeros_like(c) for c in c_list]
    z = work.consensus_update(c_list, lambdas, 1.0)
    for sel, c in zip(work.selectors, c_list):
        np.testing.assert_allclose(z[sel], c, atol=1e-12)


def test_consensus_update_is_exact_minimizer(tiny_problem):
    work = ConsensusAdmm(tiny_problem)
    rng = np.random.default_rng(1)
    rho = 1.7
    c_list = [rng.normal(size=len(q)) for q in work.sub_cost]
    lambdas = [rng.normal(size=len(q)) for q in work.sub_cost]
    z = work.consensus_update(c_list, lambdas, rho)
    grad = np.zeros_like(z)
    for sel, c, lam in zip(work.selectors, c_list, lambdas):
        np.add.at(grad, sel, lam + rho * (z[sel] - c))
    assert np.linalg.norm(grad) <= 1e-9 * max(1.0, np.linalg.norm(z))


def test_dual_update_examples():
    lam = np.array([1.0, -1.0])
    np.testing.assert_allclose(dual_update(lam, np.array([2.0, 3.0]), np.array([2.0, 3.0]), 5.0), lam)
    out = dual_update(np.zeros(1), np.array([2.0]), np.array([1.0]), 2.0)
    assert out[0] == pytest.approx(2.0)


def test_dual_update_bounded_by_residual():
    rng = np.random.default_rng(2)
    lam = rng.normal(size=8)
    z_sel = rng.normal(size=8)
    c = z_sel + 1e-6 * rng.normal(size=8)
    rho = 3.0
    out = dual_update(lam, z_sel, c, rho)
    assert np.linalg.norm(out - lam) <= rho * np.linalg.norm(z_sel - c) + 1e-15


def test_penalty_adapt_rules():
    cfg = AdmmConfig(rho0=1.0, mu=10.0, tau_scale=2.0)
    lam = [np.ones(3)]
    rho, lams = penalty_adapt(1.0, lam, 1.0, 0.05, cfg)
    assert rho == 2.0
    np.testing.assert_allclose(lams[0], 2.0 * np.ones(3))  # lambda/rho preserved
    rho, lams = penalty_adapt(1.0, lam, 0.05, 1.0, cfg)
    assert rho == 0.5
    rho, lams = penalty_adapt(1.0, lam, 1.0, 1.0, cfg)
    assert rho == 1.0
    assert lams is lam


def test_run_single_clique_converges_immediately(single_clique_problem):
    ref = dsdp.solve_dsdp(single_clique_problem, settings=SolverSettings(tol=1e-9))
    cfg = AdmmConfig(rho0=1e-2, max_outer_iterations=30, eps_rel=1e-6, inner_tol=1e-8)
    res, state = admm.run(single_clique_problem, config=cfg)
    assert state.iteration <= 3
    assert state.history[0]["pri_res"] < 1e-8
    rel = abs(res.objective - ref.objective) / (1 + abs(ref.objective))
    assert rel < 1e-4


def test_run_matches_dsdp(tiny_problem, tiny_reference):
    cfg = AdmmConfig(
        rho0=1e-2, max_outer_iterations=200, eps_rel=1e-8, inner_tol=1e-8
    )
    res, state = admm.run(tiny_problem, config=cfg)
    rel = abs(res.objective - tiny_reference.objective) / (
        1 + abs(tiny_reference.objective)
    )
    assert rel < 1e-4


def test_fixed_iteration_mode(tiny_problem):
    cfg = AdmmConfig(fixed_iterations=3, inner_tol=1e-3)
    res, state = admm.run(tiny_problem, config=cfg)
    assert state.iteration == 3
    assert len(state.history) == 3


def test_parallel_map_matches_sequential(tiny_problem):
    cfg_seq = AdmmConfig(fixed_iterations=4, inner_tol=1e-5, n_workers=1)
    cfg_par = AdmmConfig(fixed_iterations=4, inner_tol=1e-5, n_workers=4)
    res_s, _ = admm.run(tiny_problem, config=cfg_seq)
    res_p, _ = admm.run(tiny_problem, config=cfg_par)
    assert res_s.objective == pytest.approx(res_p.objective, rel=1e-12)


def test_residual_log(tmp_path, tiny_problem):
    cfg = AdmmConfig(fixed_iterations=2, inner_tol=1e-4)
    _, state = admm.run(tiny_problem, config=cfg)
    path = tmp_path / "residuals.csv"
    admm.write_residual_log(state, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,rho,pri_res,dual_res,objective"
    assert len(lines) == 3


def test_thread_cap_env(monkeypatch):
    monkeypatch.setenv("CHORDAL_SDP_THREADS", "7")
    assert admm.thread_cap() == 7
    monkeypatch.setenv("CHORDAL_SDP_THREADS", "bogus")
    assert admm.thread_cap() == 1
    monkeypatch.delenv("CHORDAL_SDP_THREADS")
    assert admm.thread_cap() == 1
