import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordalloc import symmat


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    return A + A.T


def test_vech_2x2_example():
    S = np.array([[1.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(symmat.vech(S), [1.0, 2.0 * np.sqrt(2.0), 3.0])


def test_vech_identity():
    np.testing.assert_allclose(symmat.vech(np.eye(2)), [1.0, 0.0, 1.0])


def test_trace_identity_random_4x4():
    Q = random_symmetric(4, 0)
    X = random_symmetric(4, 1)
    got = symmat.vech(Q) @ symmat.vech(X)
    want = np.trace(Q @ X)
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10**6))
@settings(max_examples=60, deadline=None)
def test_trace_identity_property(n, seed):
    Q = random_symmetric(n, seed)
    X = random_symmetric(n, seed + 1)
    got = symmat.vech(Q) @ symmat.vech(X)
    want = np.trace(Q @ X)
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_mat_examples():
    np.testing.assert_allclose(symmat.mat(np.array([1.0, 0.0, 1.0])), np.eye(2))
    np.testing.assert_allclose(symmat.mat(np.array([5.0])), [[5.0]])


def test_round_trip_100_random_6x6():
    for seed in range(100):
        S = random_symmetric(6, seed)
        assert np.abs(symmat.mat(symmat.vech(S)) - S).max() < 1e-14


def test_mat_rejects_bad_length():
    with pytest.raises(symmat.ShapeError):
        symmat.mat(np.ones(4))


def test_vech_rejects_nonsquare():
    with pytest.raises(symmat.ShapeError):
        symmat.vech(np.ones((2, 3)))


def test_eig_desc_examples():
    w, _ = symmat.eig_desc(np.eye(3))
    np.testing.assert_allclose(w, [1.0, 1.0, 1.0])
    w, _ = symmat.eig_desc(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(w, [3.0, 2.0, 1.0])


def test_eig_desc_rank_one():
    rng = np.random.default_rng(3)
    x = rng.normal(size=5)
    x /= np.linalg.norm(x)
    w, V = symmat.eig_desc(np.outer(x, x))
    np.testing.assert_allclose(w, [1.0, 0.0, 0.0, 0.0, 0.0], atol=1e-12)
    assert abs(abs(V[:, 0] @ x) - 1.0) < 1e-12


def test_eig_desc_reconstruction():
    S = random_symmetric(7, 9)
    w, V = symmat.eig_desc(S)
    err = np.linalg.norm(V @ np.diag(w) @ V.T - S)
    assert err <= 1e-9 * np.linalg.norm(S)


def test_min_eig_examples():
    assert symmat.min_eig(np.eye(2)) == pytest.approx(1.0)
    assert symmat.min_eig(np.diag([1.0, -2.0])) == pytest.approx(-2.0)
    assert symmat.min_eig(np.zeros((3, 3))) == pytest.approx(0.0)


def test_sym_kron_congruence():
    rng = np.random.default_rng(11)
    N = rng.normal(size=(5, 5))  # general, not symmetric
    M = random_symmetric(5, 12)
    got = symmat.sym_kron(N) @ symmat.vech(M)
    want = symmat.vech(N @ M @ N.T)
    np.testing.assert_allclose(got, want, atol=1e-12 * np.abs(want).max())
