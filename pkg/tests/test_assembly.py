import numpy as np
import pytest

from chordalloc import assembly, chordal, ctro, model, mw
from chordalloc.symmat import vech


@pytest.fixture(scope="module")
def ctro_setup():
    inst = ctro.simulate(ctro.CtroConfig(n_states=4, n_landmarks=3, seed=2))
    prob = ctro.lift(inst)
    dec = chordal.manual_chain_decomposition(prob)
    return inst, prob, dec


def unit_scales(prob):
    return np.ones(prob.total_dim)


def test_full_block_side_ctro():
    prob = ctro.lift(ctro.simulate(ctro.CtroConfig(n_states=3, n_landmarks=2, seed=0)))
    prog = assembly.assemble_full(prob)
    assert prog.block_sides == (22,)


def test_full_block_side_and_rows_mw():
    inst = mw.simulate(mw.MwConfig(n_poses=2, n_landmarks=4, seed=1))
    prog = assembly.assemble_full(mw.lift(inst, redundant=True))
    assert prog.block_sides == (25,)
    assert prog.n_rows == 2 * (9 + 11) + 1


def test_full_cost_identity(ctro_setup):
    inst, prob, _ = ctro_setup
    prog = assembly.assemble_full(prob, scales=unit_scales(prob))
    rng = np.random.default_rng(1)
    for _ in range(20):
        states = inst.gt_states + rng.normal(0, 0.3, inst.gt_states.shape)
        pt = model.lift_point(prob, list(states))
        x = pt.full_vector()
        got = float(prog.cost @ vech(np.outer(x, x))) + prog.objective_offset
        want = model.evaluate_cost(prob, pt)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_dsdp_chain_block_sides(ctro_setup):
    _, prob, dec = ctro_setup
    prog = assembly.assemble_dsdp(prob, dec)
    assert prog.block_sides == (15, 15, 15)


def test_dsdp_cost_telescopes(ctro_setup):
    inst, prob, dec = ctro_setup
    prog_d = assembly.assemble_dsdp(prob, dec, scales=unit_scales(prob))
    rng = np.random.default_rng(2)
    states = inst.gt_states + rng.normal(0, 0.3, inst.gt_states.shape)
    pt = model.lift_point(prob, list(states))
    x = pt.full_vector()
    total = prog_d.objective_offset
    for t, sem in enumerate(prog_d.block_semantics):
        xt = x[sem]
        total += float(prog_d.cost[prog_d.block_slice(t)] @ vech(np.outer(xt, xt)))
    want = model.evaluate_cost(prob, pt)
    assert abs(total - want) <= 1e-12 * max(1.0, abs(want))


def test_dsdp_overlap_row_count(ctro_setup):
    _, prob, dec = ctro_setup
    prog = assembly.assemble_dsdp(prob, dec)
    n_overlap = prog.row_kinds.count("overlap")
    s = 1 + 7
    assert n_overlap == 2 * (s * (s + 1) // 2)  # two interior tree edges


def test_dsdp_row_accounting(ctro_setup):
    _, prob, dec = ctro_setup
    prog_full = assembly.assemble_full(prob)
    prog_d = assembly.assemble_dsdp(prob, dec)
    n_overlap = prog_d.row_kinds.count("overlap")
    extra_homog = dec.n_cliques - 1
    assert prog_d.n_rows == prog_full.n_rows + n_overlap + extra_homog
    # node constraints land in exactly one clique
    assert prog_d.row_kinds.count("substitution") == prob.n_blocks


def test_dsdp_feasible_rank_one_satisfies_rows(ctro_setup):
    inst, prob, dec = ctro_setup
    prog = assembly.assemble_dsdp(prob, dec, scales=unit_scales(prob))
    pt = model.lift_point(prob, list(inst.gt_states))
    x = pt.full_vector()
    xcat = np.concatenate(
        [vech(np.outer(x[sem], x[sem])) for sem in prog.block_semantics]
    )
    assert np.abs(prog.A @ xcat - prog.b).max() < 1e-9


def test_homogenization_rows(ctro_setup):
    inst, prob, dec = ctro_setup
    prog_d = assembly.assemble_dsdp(prob, dec, scales=unit_scales(prob))
    A, rhs = assembly.homogenization_rows(prog_d)
    assert A.shape[0] == dec.n_cliques
    assert np.all(rhs == 1.0)
    prog_f = assembly.assemble_full(prob)
    A_f, _ = assembly.homogenization_rows(prog_f)
    assert A_f.shape[0] == 1
    # feasible clique matrices satisfy them exactly
    pt = model.lift_point(prob, list(inst.gt_states))
    x = pt.full_vector()
    xcat = np.concatenate(
        [vech(np.outer(x[sem], x[sem])) for sem in prog_d.block_semantics]
    )
    assert np.abs(A @ xcat - rhs).max() == 0.0


def test_redundant_toggle_changes_rows_not_blocks():
    inst = mw.simulate(mw.MwConfig(n_poses=3, n_landmarks=3, seed=3))
    prob_on = mw.lift(inst, redundant=True)
    prob_off = mw.lift(inst, redundant=False)
    dec = chordal.manual_chain_decomposition(prob_on)
    prog_on = assembly.assemble_dsdp(prob_on, dec)
    prog_off = assembly.assemble_dsdp(prob_off, dec)
    assert prog_on.block_sides == prog_off.block_sides
    assert prog_on.n_rows > prog_off.n_rows


def test_relative_cost_outside_cliques_raises():
    blocks = [model.VarBlock(index=k, state_dim=1, lift_dim=0) for k in range(3)]
    M = np.zeros((3, 3))
    prob = model.LiftedProblem(
        blocks=blocks,
        cost_factors=[model.CostFactor(scope=(0, 2), matrix=M)],
        constraint_factors=[model.homogenization_factor(k, 2) for k in range(3)],
        relative_scopes=[(0, 2)],
    )
    dec = chordal.CliqueDecomposition(
        cliques=[(0, 1), (1, 2)], tree_edges=[(0, 1, (1,))]
    )
    with pytest.raises(chordal.DecompositionError):
        assembly.assemble_dsdp(prob, dec)


def test_text_fixture_round_trip(tmp_path, ctro_setup):
    _, prob, dec = ctro_setup
    prog = assembly.assemble_dsdp(prob, dec)
    path = tmp_path / "program.txt"
    assembly.save_program_text(prog, str(path))
    back = assembly.load_program_text(str(path))
    assert back.block_sides == prog.block_sides
    np.testing.assert_allclose(back.cost, prog.cost)
    np.testing.assert_allclose(back.b, prog.b)
    assert (back.A != prog.A).nnz == 0
