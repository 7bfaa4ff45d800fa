"""Symmetric-matrix and PSD-cone utilities.

Half-vectorization uses the scaled convention: upper-triangular entries are
read in column-major order and off-diagonal entries are multiplied by sqrt(2),
so that ``vech(Q) @ vech(X) == trace(Q @ X)`` for symmetric Q, X.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

SQRT2 = math.sqrt(2.0)


class ShapeError(ValueError):
    """A vector or matrix has a shape inconsistent with its intended use."""


@lru_cache(maxsize=None)
def tri_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) index arrays of the upper triangle, column-major order."""
    rows = np.concatenate([np.arange(j + 1) for j in range(n)])
    cols = np.repeat(np.arange(n), np.arange(1, n + 1))
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _tri_scale(n: int) -> np.ndarray:
    rows, cols = tri_pairs(n)
    s = np.where(rows == cols, 1.0, SQRT2)
    s.setflags(write=False)
    return s


def vech_len(n: int) -> int:
    return n * (n + 1) // 2


def side_from_vech_len(m: int) -> int:
    n = (math.isqrt(8 * m + 1) - 1) // 2
    if vech_len(n) != m:
        raise ShapeError(f"length {m} is not of the form n(n+1)/2")
    return n


def vech_index(i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, in the half-vectorization."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def vech(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {S.shape}")
    n = S.shape[0]
    rows, cols = tri_pairs(n)
    return S[rows, cols] * _tri_scale(n)


def mat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    n = side_from_vech_len(v.shape[0])
    rows, cols = tri_pairs(n)
    vals = v / _tri_scale(n)
    S = np.zeros((n, n))
    S[rows, cols] = vals
    S[cols, rows] = vals
    return S


def symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def eig_desc(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues sorted descending with matching orthonormal eigenvectors."""
    w, V = np.linalg.eigh(symmetrize(np.asarray(S, dtype=float)))
    return w[::-1], V[:, ::-1]


def min_eig(S: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(np.asarray(S, dtype=float)))[0])


def is_psd(S: np.ndarray, tol: float = 0.0) -> bool:
    return min_eig(S) >= -tol


def sym_kron(N: np.ndarray) -> np.ndarray:
    """Symmetric Kronecker square of N as a dense operator on vech space.

    Satisfies ``sym_kron(N) @ vech(M) == vech(N @ M @ N.T)`` for symmetric M;
    N need not be symmetric.
    """
    n = N.shape[0]
    rows, cols = tri_pairs(n)
    s = _tri_scale(n)
    Nrr = N[np.ix_(rows, rows)]
    Ncc = N[np.ix_(cols, cols)]
    Nrc = N[np.ix_(rows, cols)]
    Ncr = N[np.ix_(cols, rows)]
    return 0.5 * np.outer(s, s) * (Nrr * Ncc + Nrc * Ncr)
