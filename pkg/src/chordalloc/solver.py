"""Primal-dual interior-point solver over products of PSD cones.

Solves   minimize    c' x + 1/2 x' P x
         subject to  A x = b,   mat(x_t) >= 0  per block,

in scaled half-vectorization coordinates, with Nesterov-Todd scaling and a
Mehrotra-style predictor-corrector. Small blocks use explicit scaling
operators; a single large block (the monolithic relaxation) uses implicit
operator products grouped by constraint scope.

A presolve pass drops duplicate rows, rows implied by variable pins, and
numerically dependent rows so the Schur complement stays invertible.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh, eigvalsh, solve_triangular
from scipy.linalg.lapack import dpstrf
from scipy.sparse.linalg import splu

from .assembly import ConicProgram
from .symmat import SQRT2, sym_kron, tri_pairs, vech_len


class InfeasibleInputError(ValueError):
    """Presolve found mutually inconsistent constraint rows."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10
    max_iterations: int = 100
    verbosity: int = 0
    step_fraction: float = 0.98
    dense_block_limit: int = 1000  # vech size up to which block operators are explicit
    dense_schur_limit: int = 1200
    presolve_rank_limit: int = 2500

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class ConicSolution:
    status: str  # optimal | max_iter | infeasible-detected | numerical-failure
    blocks: list[np.ndarray]
    y: np.ndarray
    s: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    history: list[tuple] = field(default_factory=list)

    @property
    def residuals(self) -> tuple[float, float, float]:
        return (self.primal_residual, self.dual_residual, self.gap)


def write_iteration_log(solution: ConicSolution, path: str) -> None:
    with open(path, "w") as f:
        f.write("iter,pres,dres,gap,step\n")
        for row in solution.history:
            f.write(",".join(repr(v) for v in row) + "\n")


# Presolve -------------------------------------------------------------------


def presolve(
    program: ConicProgram, rank_limit: int | None = None
) -> tuple[ConicProgram, np.ndarray]:
    """Drop redundant equality rows; returns the reduced program and kept indices.

    Three passes: exact duplicates and scalar multiples, rows implied by
    single-entry pins, and (for moderate row counts) numerically dependent
    rows found by pivoted Cholesky of the row Gram matrix. Inconsistent
    dependent rows raise InfeasibleInputError.
    """
    A = program.A.tocsr()
    b = program.b
    m = A.shape[0]
    keep = np.ones(m, dtype=bool)
    if rank_limit is None:
        rank_limit = SolverSettings().presolve_rank_limit

    # pass 1: duplicates / scalar multiples
    seen: dict[bytes, int] = {}
    norm_rhs: dict[bytes, float] = {}
    for r in range(m):
        sl = slice(A.indptr[r], A.indptr[r + 1])
        cols = A.indices[sl]
        vals = A.data[sl]
        if len(cols) == 0:
            if abs(b[r]) > 1e-9:
                raise InfeasibleInputError(f"empty row {r} with nonzero rhs")
            keep[r] = False
            continue
        scale = vals[0]
        key = cols.tobytes() + (vals / scale).tobytes()
        if key in seen:
            if abs(b[r] / scale - norm_rhs[key]) > 1e-9 * (1.0 + abs(norm_rhs[key])):
                raise InfeasibleInputError(
                    f"rows {seen[key]} and {r} are inconsistent duplicates"
                )
            keep[r] = False
        else:
            seen[key] = r
            norm_rhs[key] = b[r] / scale

    # pass 2: single-entry rows pin a variable; rows supported only on pinned
    # variables reduce to 0 = 0 (or are inconsistent)
    pins: dict[int, float] = {}
    for r in np.nonzero(keep)[0]:
        sl = slice(A.indptr[r], A.indptr[r + 1])
        if A.indptr[r + 1] - A.indptr[r] == 1:
            col = int(A.indices[sl][0])
            val = program.b[r] / A.data[sl][0]
            if col in pins and abs(pins[col] - val) > 1e-9 * (1.0 + abs(val)):
                raise InfeasibleInputError(f"conflicting pins on variable {col}")
            pins[col] = val
    if pins:
        for r in np.nonzero(keep)[0]:
            sl = slice(A.indptr[r], A.indptr[r + 1])
            cols = A.indices[sl]
            if len(cols) <= 1 or not all(int(cl) in pins for cl in cols):
                continue
            implied = float(
                sum(v * pins[int(cl)] for v, cl in zip(A.data[sl], cols))
            )
            if abs(program.b[r] - implied) > 1e-9 * (1.0 + abs(program.b[r])):
                raise InfeasibleInputError(f"row {r} contradicts pinned variables")
            keep[r] = False

    # pass 3: numerical rank of the remaining rows
    kept_idx = np.nonzero(keep)[0]
    if 1 < len(kept_idx) <= rank_limit:
        Ak = A[kept_idx]
        G = (Ak @ Ak.T).toarray()
        tol = 1e-12 * max(G.diagonal().max(), 1.0)
        c_fac, piv, rank, info = dpstrf(G, tol=tol, lower=1)
        piv = np.asarray(piv, dtype=int) - 1
        if rank < len(kept_idx):
            basis = piv[:rank]
            extra = piv[rank:]
            Gbb = G[np.ix_(basis, basis)]
            fac = cho_factor(Gbb + 1e-14 * max(1.0, Gbb.diagonal().max()) * np.eye(rank))
            coeffs = cho_solve(fac, G[np.ix_(basis, extra)])
            bk = program.b[kept_idx]
            implied = coeffs.T @ bk[basis]
            bad = np.abs(bk[extra] - implied) > 1e-9 * (1.0 + np.abs(bk[extra]))
            if np.any(bad):
                raise InfeasibleInputError(
                    f"{int(bad.sum())} dependent rows have inconsistent rhs"
                )
            keep[kept_idx[extra]] = False

    kept_idx = np.nonzero(keep)[0]
    reduced = replace(
        program,
        A=A[kept_idx].tocsr(),
        b=program.b[kept_idx],
        row_kinds=[program.row_kinds[i] for i in kept_idx] if program.row_kinds else [],
    )
    return reduced, kept_idx


# Backends -------------------------------------------------------------------


class Backend(abc.ABC):
    """Pluggable solver backend; external solvers can be adapted behind this."""

    supports_quadratic_objective: bool = False
    supports_multi_block: bool = False

    @abc.abstractmethod
    def solve(self, program: ConicProgram, settings: SolverSettings) -> ConicSolution:
        ...


class InteriorPointBackend(Backend):
    supports_quadratic_objective = True
    supports_multi_block = True

    def solve(self, program: ConicProgram, settings: SolverSettings) -> ConicSolution:
        return _IpmWorkspace(program, settings).run()


def solve(
    program: ConicProgram,
    settings: SolverSettings | None = None,
    backend: Backend | None = None,
) -> ConicSolution:
    """Presolve, solve with the chosen backend, reinflate duals to all rows."""
    settings = settings or SolverSettings()
    backend = backend or InteriorPointBackend()
    reduced, kept = presolve(program, settings.presolve_rank_limit)
    sol = backend.solve(reduced, settings)
    y_full = np.zeros(program.n_rows)
    y_full[kept] = sol.y
    sol.y = y_full
    return sol


# Interior-point implementation ----------------------------------------------


def _svec_concat(mats, sides, caches):
    out = np.empty(sum(vech_len(s) for s in sides))
    off = 0
    for M, s, (r, ccols, scl) in zip(mats, sides, caches):
        d = vech_len(s)
        out[off : off + d] = M[r, ccols] * scl
        off += d
    return out


def _chol_safe(M: np.ndarray) -> np.ndarray:
    try:
        return cholesky(M, lower=True)
    except np.linalg.LinAlgError:
        shift = max(np.abs(M.diagonal()).max(), 1.0) * 1e-14
        for _ in range(4):
            try:
                return cholesky(M + shift * np.eye(M.shape[0]), lower=True)
            except np.linalg.LinAlgError:
                shift *= 100.0
        raise


class _Block:
    """Static per-block data plus the per-iteration NT operators.

    Scaling follows the Cholesky/SVD recipe: with X = Lx Lx', S = Ls Ls' and
    Ls' Lx = U diag(sig) V', the matrix R = Lx V diag(sig)^(-1/2) maps both
    cone variables to the common diagonal point diag(sig), and W = R R'
    satisfies W S W = X. The Newton system is solved in scaled direction
    variables dxt = svec(R^-1 dX R^-T), dst = svec(R' dS R), in which the
    linearized complementarity couples them through the identity.
    """

    def __init__(self, side: int, A_cols: sp.csc_matrix, P_block, dense: bool):
        self.side = side
        self.d = vech_len(side)
        self.rows, self.cols = tri_pairs(side)
        self.scale = np.where(self.rows == self.cols, 1.0, SQRT2)
        coo = A_cols.tocoo()
        self.ridx = np.unique(coo.row)
        self.R = np.asarray(A_cols[self.ridx].todense())
        self.P = P_block
        self.dense = dense
        # iteration state
        self.W = None
        self.At = None  # scaled constraint rows (dense path)
        self.Hfac = None
        self.E = None  # svec-space congruence by Rnt (dense path)
        self.Rnt = None
        self.Rnt_inv = None
        self.sig = None
        self.Lx = None
        self.Ls = None

    def svec(self, M):
        return M[self.rows, self.cols] * self.scale

    def smat(self, v):
        M = np.zeros((self.side, self.side))
        vals = v / self.scale
        M[self.rows, self.cols] = vals
        M[self.cols, self.rows] = vals
        return M

    def update_scaling(self, X, S):
        self.Lx = _chol_safe(X)
        self.Ls = _chol_safe(S)
        U, sig, Vt = np.linalg.svd(self.Ls.T @ self.Lx)
        sig = np.maximum(sig, sig[0] * 1e-16)
        self.sig = sig
        self.Rnt = (self.Lx @ Vt.T) / np.sqrt(sig)
        Lx_inv = solve_triangular(self.Lx, np.eye(self.side), lower=True)
        self.Rnt_inv = (np.sqrt(sig)[:, None] * Vt) @ Lx_inv
        if self.dense:
            self.E = sym_kron(self.Rnt)
            self.At = self.R @ self.E
            if self.P is not None:
                Pt = self.E.T @ self.P @ self.E
                Pt[np.diag_indices(self.d)] += 1.0
                self.Hfac = cho_factor(Pt)
            else:
                self.Hfac = None
        else:
            self.W = self.Rnt @ self.Rnt.T

    # scaled-space operator applications (operator form for large blocks)

    def to_x(self, vt):
        """svec(dX) from the scaled direction: congruence by R."""
        if self.E is not None:
            return self.E @ vt
        return self.svec(self.Rnt @ self.smat(vt) @ self.Rnt.T)

    def to_s(self, vt):
        """svec(dS) from the scaled dual direction: congruence by R^-T."""
        return self.svec(self.Rnt_inv.T @ self.smat(vt) @ self.Rnt_inv)

    def scale_dual(self, v):
        """Adjoint map: svec(R' mat(v) R)."""
        if self.E is not None:
            return self.E.T @ v
        return self.svec(self.Rnt.T @ self.smat(v) @ self.Rnt)

    def hinv_apply(self, vt):
        if self.P is None:
            return vt
        return cho_solve(self.Hfac, vt)

    def ptilde_apply(self, vt):
        if self.P is None:
            return np.zeros_like(vt)
        return self.E.T @ (self.P @ (self.E @ vt))

    def schur_contribution(self):
        if self.P is None:
            return self.At @ self.At.T
        return self.At @ cho_solve(self.Hfac, self.At.T)


class _ScopeGroup:
    """Constraint rows of one large block sharing a support scope."""

    def __init__(self, row_idx, scope, mats):
        self.row_idx = np.asarray(row_idx)
        self.scope = np.asarray(scope)
        self.mats = np.asarray(mats)  # (n_rows, k, k) local symmetric matrices


def _build_groups(block: _Block, semantics, semantic_node):
    """Group a large block's rows by owning node (fallback: one group per row)."""
    pair_r, pair_c = block.rows, block.cols
    groups: dict = {}
    for local_r in range(len(block.ridx)):
        entries = np.nonzero(block.R[local_r])[0]
        vals = block.R[local_r, entries] / block.scale[entries]
        pi, pj = pair_r[entries], pair_c[entries]
        support = np.unique(np.concatenate([pi, pj]))
        if semantic_node is not None:
            nodes = np.unique(semantic_node[semantics[support]])
            nodes = nodes[nodes >= 0]
        else:
            nodes = np.array([0, 1])  # force fallback
        if len(nodes) <= 1:
            key = int(nodes[0]) if len(nodes) else -1
            if key not in groups:
                if key == -1:
                    scope = np.nonzero(semantics == 0)[0] if semantic_node is not None else support
                else:
                    h_pos = np.nonzero(semantics == 0)[0]
                    node_pos = np.nonzero(semantic_node[semantics] == key)[0]
                    scope = np.concatenate([h_pos, node_pos])
                groups[key] = (scope, [], [])
        else:
            key = ("row", local_r)
            groups[key] = (support, [], [])
        scope, rows_acc, mats_acc = groups[key]
        pos_of = {int(p): i for i, p in enumerate(scope)}
        k = len(scope)
        M = np.zeros((k, k))
        for v, a, b2 in zip(vals, pi, pj):
            ia, ib = pos_of[int(a)], pos_of[int(b2)]
            M[ia, ib] = v
            M[ib, ia] = v
        rows_acc.append(int(block.ridx[local_r]))
        mats_acc.append(M)
    return [_ScopeGroup(r, scope, mats) for scope, r, mats in groups.values()]


class _IpmWorkspace:
    def __init__(self, program: ConicProgram, settings: SolverSettings):
        self.settings = settings
        self.sides = program.block_sides
        self.nu = float(sum(self.sides))
        self.m = program.n_rows
        self.n = program.n_vars
        if self.m == 0:
            raise SolverError("programs without equality rows are not supported")

        A = program.A.tocsr().astype(float)
        b = np.asarray(program.b, dtype=float)
        c = np.asarray(program.cost, dtype=float)
        P = program.quad.tocsr().astype(float) if program.quad is not None else None

        # equilibration: unit-infinity-norm rows, globally scaled cost
        row_max = np.maximum(np.abs(A).max(axis=1).toarray().ravel(), 1e-300)
        self.row_scale = row_max
        D = sp.diags(1.0 / row_max)
        self.A = (D @ A).tocsr()
        self.b = b / row_max
        cost_scale = max(1.0, np.abs(c).max() if c.size else 1.0)
        if P is not None and P.nnz:
            cost_scale = max(cost_scale, np.abs(P.data).max())
        self.cost_scale = cost_scale
        self.c = c / cost_scale
        self.P = P / cost_scale if P is not None else None
        self.offset = float(program.objective_offset)
        self.norm_b_orig = float(np.linalg.norm(b))
        self.norm_c_orig = float(np.linalg.norm(c))

        self.A_csc = self.A.tocsc()
        offsets = program.block_offsets
        self.offsets = offsets
        self.blocks: list[_Block] = []
        self.caches = []
        for t, side in enumerate(self.sides):
            sl = program.block_slice(t)
            P_b = None
            if self.P is not None:
                P_b = np.asarray(self.P[sl, sl].todense())
            dense = vech_len(side) <= settings.dense_block_limit
            blk = _Block(side, self.A_csc[:, sl], P_b, dense)
            self.blocks.append(blk)
            self.caches.append((blk.rows, blk.cols, blk.scale))
        if self.P is not None:
            # quadratic terms must not couple PSD blocks
            coo = self.P.tocoo()
            bo = np.searchsorted(offsets, coo.row, side="right") - 1
            bc = np.searchsorted(offsets, coo.col, side="right") - 1
            if np.any(bo != bc):
                raise SolverError("quadratic objective couples PSD blocks")
            if any(not blk.dense for blk in self.blocks):
                raise SolverError(
                    "quadratic objectives require explicit (small) block operators"
                )

        self.grouped = [
            (t, blk) for t, blk in enumerate(self.blocks) if not blk.dense
        ]
        self.groups: dict[int, list[_ScopeGroup]] = {}
        for t, blk in self.grouped:
            self.groups[t] = _build_groups(
                blk, program.block_semantics[t], program.semantic_node
            )
        self.dense_schur = bool(self.grouped) or self.m <= settings.dense_schur_limit
        if not self.dense_schur:
            pattern_i, pattern_j = [], []
            for blk in self.blocks:
                r = blk.ridx
                pattern_i.append(np.repeat(r, len(r)))
                pattern_j.append(np.tile(r, len(r)))
            self._coo_i = np.concatenate(pattern_i)
            self._coo_j = np.concatenate(pattern_j)

    # per-block helpers ------------------------------------------------

    def svec_all(self, mats):
        return _svec_concat(mats, self.sides, self.caches)

    def blockwise(self, v):
        off = 0
        for blk in self.blocks:
            yield blk, v[off : off + blk.d]
            off += blk.d

    def apply(self, fn, v):
        out = np.empty_like(v)
        off = 0
        for blk in self.blocks:
            out[off : off + blk.d] = getattr(blk, fn)(v[off : off + blk.d])
            off += blk.d
        return out

    # Schur machinery ----------------------------------------------------

    def _schur_grouped(self, S, t, blk):
        W = blk.W
        groups = self.groups[t]
        for gi, ga in enumerate(groups):
            for gb in groups[gi:]:
                K = W[np.ix_(ga.scope, gb.scope)]
                M = np.einsum(
                    "iab,bc,jcd,ad->ij", ga.mats, K, gb.mats, K, optimize=True
                )
                S[np.ix_(ga.row_idx, gb.row_idx)] += M
                if gb is not ga:
                    S[np.ix_(gb.row_idx, ga.row_idx)] += M.T

    def factor_schur(self):
        if self.dense_schur:
            S = np.zeros((self.m, self.m))
            for t, blk in enumerate(self.blocks):
                if blk.dense:
                    S[np.ix_(blk.ridx, blk.ridx)] += blk.schur_contribution()
                else:
                    self._schur_grouped(S, t, blk)
            dinv = 1.0 / np.sqrt(np.maximum(S.diagonal(), 1e-300))
            Ss = S * dinv[:, None] * dinv[None, :]
            jitter = 0.0
            fac = None
            for _ in range(4):
                try:
                    fac = cho_factor(Ss + jitter * np.eye(self.m))
                    break
                except np.linalg.LinAlgError:
                    jitter = 1e-13 if jitter == 0.0 else jitter * 100
            if fac is None:
                raise SolverError("Schur factorization failed")

            def solver(rhs):
                sol = dinv * cho_solve(fac, dinv * rhs)
                for _ in range(3):
                    sol += dinv * cho_solve(fac, dinv * (rhs - S @ sol))
                return sol

            return solver

        vals = np.concatenate(
            [blk.schur_contribution().ravel() for blk in self.blocks]
        )
        Scoo = sp.coo_matrix((vals, (self._coo_i, self._coo_j)), shape=(self.m, self.m))
        Scsc = Scoo.tocsc()
        dinv = 1.0 / np.sqrt(np.maximum(np.abs(Scsc.diagonal()), 1e-300))
        D = sp.diags(dinv)
        Ss = (D @ Scsc @ D).tocsc()
        jitter = 0.0
        lu = None
        for _ in range(4):
            try:
                lu = splu(Ss + jitter * sp.identity(self.m, format="csc") if jitter else Ss)
                break
            except RuntimeError:
                jitter = 1e-13 if jitter == 0.0 else jitter * 100
        if lu is None:
            raise SolverError("Schur factorization failed")

        def solver(rhs):
            sol = dinv * lu.solve(dinv * rhs)
            for _ in range(2):
                sol += dinv * lu.solve(dinv * (rhs - Scsc @ sol))
            return sol

        return solver

    def atilde(self, vt):
        return self.A @ self.apply("to_x", vt)

    def atilde_T(self, y):
        return self.apply("scale_dual", self.A.T @ y)

    def _solve_reduced(self, schur_solve, u, rp):
        t1 = self.apply("hinv_apply", u)
        dy = schur_solve(rp - self.atilde(t1))
        dxt = self.apply("hinv_apply", self.atilde_T(dy) + u)
        return dxt, dy

    def newton(self, schur_solve, rp, rd, rct):
        """Newton direction from the scaled-variable reduction.

        rct is the scaled complementarity rhs (dxt + dst = rct); returns both
        the cone-space directions and their scaled counterparts. One round of
        residual refinement on the reduced system keeps the primal equation
        accurate deep into the end-game.
        """
        u = rct - self.apply("scale_dual", rd)
        dxt, dy = self._solve_reduced(schur_solve, u, rp)
        for _ in range(1):
            e1 = u - dxt - self.atilde_T(-dy)
            if self.P is not None:
                e1 = e1 - self.apply("ptilde_apply", dxt)
            e2 = rp - self.atilde(dxt)
            cxt, cy = self._solve_reduced(schur_solve, e1, e2)
            dxt = dxt + cxt
            dy = dy + cy
        dst = rct - dxt
        dx = self.apply("to_x", dxt)
        # recover ds from the dual equation so dual feasibility is preserved
        # exactly; dst is kept for the second-order corrector
        ds = rd - self.A.T @ dy
        if self.P is not None:
            ds = ds + self.P @ dx
        return dx, dy, ds, dxt, dst

    # main loop ----------------------------------------------------------

    def run(self) -> ConicSolution:
        st = self.settings
        X, S, y = self._initial_point()
        best = None
        best_mu = np.inf
        best_dual = -np.inf
        history = []
        stall = 0
        no_improve = 0
        mu0 = None
        last_step = 0.0
        status = "max_iter"
        it = 0

        for it in range(st.max_iterations):
            x = self.svec_all(X)
            s = self.svec_all(S)
            rp = self.b - self.A @ x
            Px = self.P @ x if self.P is not None else None
            rd = self.c - self.A.T @ y - s
            if Px is not None:
                rd = rd + Px
            quad_term = 0.5 * float(x @ Px) if Px is not None else 0.0
            pobj = self.cost_scale * (float(self.c @ x) + quad_term)
            dobj = self.cost_scale * (float(self.b @ y) - quad_term)
            pres = (
                np.linalg.norm(self.row_scale * rp) / (1.0 + self.norm_b_orig)
            )
            dres = self.cost_scale * np.linalg.norm(rd) / (1.0 + self.norm_c_orig)
            # the duality gap is judged against the offset-included objective,
            # so constant cost terms do not inflate the convergence yardstick
            gap = abs(pobj - dobj) / (1.0 + abs(pobj + self.offset))
            mu = float(x @ s) / self.nu
            history.append((it, float(pres), float(dres), float(gap), last_step))
            if st.verbosity:
                print(
                    f"  ipm {it:3d} pobj {pobj: .6e} pres {pres:.2e} "
                    f"dres {dres:.2e} gap {gap:.2e} mu {mu:.2e}"
                )

            score = max(pres, dres, gap)
            if not np.isfinite(score):
                status = "numerical-failure"
                break
            if best is None or score < 0.99 * best["score"] or mu < 0.5 * best_mu:
                no_improve = 0
            else:
                no_improve += 1
            best_mu = mu if best is None else min(best_mu, mu)
            if best is None or score < best["score"]:
                best = dict(
                    score=score, X=[Xb.copy() for Xb in X], y=y.copy(), s=s.copy(),
                    pobj=pobj, dobj=dobj, pres=pres, dres=dres, gap=gap, it=it,
                )
            # every near-dual-feasible iterate certifies a lower bound once the
            # bound is debited for its infeasibility; keep the best bound seen
            if dres <= st.tol:
                rd_abs = self.cost_scale * float(np.linalg.norm(rd))
                lam_min = self.cost_scale * min(
                    float(eigvalsh(Sb)[0]) for Sb in S
                )
                trace_x = sum(float(np.trace(Xb)) for Xb in X)
                corrected = (
                    dobj
                    - rd_abs * float(np.linalg.norm(x))
                    - max(0.0, -lam_min) * trace_x
                )
                best_dual = max(best_dual, corrected)
            if pres <= st.tol and dres <= st.tol and gap <= st.tol:
                status = "optimal"
                break
            if np.abs(x).max() > 1e13 or np.abs(y).max() > 1e13:
                status = "infeasible-detected"
                break
            if mu0 is None:
                mu0 = max(mu, 1e-300)
            # numerical floor: the complementarity product cannot shrink further
            if mu <= 0.0 or mu < 1e-17 * mu0 or no_improve >= 10:
                status = "optimal" if best["score"] <= st.tol else "numerical-failure"
                break

            try:
                for blk, Xb, Sb in zip(self.blocks, X, S):
                    blk.update_scaling(Xb, Sb)
                schur_solve = self.factor_schur()

                chols_x = [blk.Lx for blk in self.blocks]
                chols_s = [blk.Ls for blk in self.blocks]
                rct_aff = self._affine_rhs()
                dx_a, dy_a, ds_a, dxt_a, dst_a = self.newton(schur_solve, rp, rd, rct_aff)
                ap_a = self._max_step(X, dx_a, chols_x)
                ad_a = self._max_step(S, ds_a, chols_s)
                mu_aff = max(
                    0.0,
                    float(
                        (x + min(1.0, ap_a) * dx_a) @ (s + min(1.0, ad_a) * ds_a)
                    )
                    / self.nu,
                )
                sigma = min(0.99, max(1e-8, (mu_aff / mu) ** 3))

                rct = self._corrector_rhs(dxt_a, dst_a, sigma * mu)
                dx, dy, ds, _, _ = self.newton(schur_solve, rp, rd, rct)
                ap = min(1.0, st.step_fraction * self._max_step(X, dx, chols_x))
                ad = min(1.0, st.step_fraction * self._max_step(S, ds, chols_s))
                if min(ap, ad) < 0.05:
                    # corrector overshoots; retry with plain centering
                    rct = self._centering_rhs(sigma * mu)
                    dx, dy, ds, _, _ = self.newton(schur_solve, rp, rd, rct)
                    ap = min(1.0, st.step_fraction * self._max_step(X, dx, chols_x))
                    ad = min(1.0, st.step_fraction * self._max_step(S, ds, chols_s))
                if self.P is not None:
                    # a quadratic objective couples the primal step into the
                    # dual equation; unequal steps would break dual feasibility
                    ap = ad = min(ap, ad)
            except (np.linalg.LinAlgError, SolverError):
                status = "numerical-failure"
                break

            off = 0
            for idx, blk in enumerate(self.blocks):
                dX = blk.smat(dx[off : off + blk.d])
                dS = blk.smat(ds[off : off + blk.d])
                X[idx] = 0.5 * ((X[idx] + ap * dX) + (X[idx] + ap * dX).T)
                S[idx] = 0.5 * ((S[idx] + ad * dS) + (S[idx] + ad * dS).T)
                off += blk.d
            y = y + ad * dy
            last_step = float(min(ap, ad))
            if last_step < 1e-8:
                stall += 1
                if stall >= 3:
                    status = "numerical-failure"
                    break
            else:
                stall = 0

        assert best is not None
        y_out = self.cost_scale * (best["y"] / self.row_scale)
        s_out = self.cost_scale * best["s"]
        dual_value = best_dual if np.isfinite(best_dual) else best["dobj"]
        return ConicSolution(
            status=status,
            blocks=best["X"],
            y=y_out,
            s=s_out,
            objective=best["pobj"] + self.offset,
            dual_objective=dual_value + self.offset,
            primal_residual=float(best["pres"]),
            dual_residual=float(best["dres"]),
            gap=float(best["gap"]),
            iterations=it + 1,
            history=history,
        )

    def _affine_rhs(self):
        # scaled form of the affine target -X: the scaled point is diag(sig)
        parts = []
        for blk in self.blocks:
            parts.append(blk.svec(np.diag(-blk.sig)))
        return np.concatenate(parts)

    def _centering_rhs(self, target):
        parts = []
        for blk in self.blocks:
            parts.append(blk.svec(np.diag((target - blk.sig**2) / blk.sig)))
        return np.concatenate(parts)

    def _corrector_rhs(self, dxt_a, dst_a, target):
        # exact second-order term: the scaled point is diagonal, so the
        # Lyapunov operator of the linearization inverts entrywise
        parts = []
        off = 0
        for blk in self.blocks:
            dXs = blk.smat(dxt_a[off : off + blk.d])
            dSs = blk.smat(dst_a[off : off + blk.d])
            T = dXs @ dSs
            rhs = -0.5 * (T + T.T)
            rhs[np.diag_indices(blk.side)] += target - blk.sig**2
            rhs *= 2.0 / np.add.outer(blk.sig, blk.sig)
            parts.append(blk.svec(rhs))
            off += blk.d
        return np.concatenate(parts)

    def _max_step(self, mats, d, chols):
        alpha = np.inf
        off = 0
        for blk, M, L in zip(self.blocks, mats, chols):
            dM = blk.smat(d[off : off + blk.d])
            off += blk.d
            Y = solve_triangular(L, dM, lower=True)
            Y = solve_triangular(L, Y.T, lower=True)
            emin = eigvalsh(0.5 * (Y + Y.T))[0]
            if emin < -1e-14:
                alpha = min(alpha, -1.0 / emin)
        return alpha

    def _initial_point(self):
        # scaled-identity cold start; data are already equilibrated, so unit
        # cone points are well centered
        xi_p = max(1.0, float(np.abs(self.b).max()) if self.m else 1.0)
        xi_d = 1.0
        X = [xi_p * np.eye(blk.side) for blk in self.blocks]
        S = [xi_d * np.eye(blk.side) for blk in self.blocks]
        return X, S, np.zeros(self.m)
