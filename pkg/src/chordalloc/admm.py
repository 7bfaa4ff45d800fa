"""Consensus ADMM over the clique tree.

Each outer iteration solves one quadratic-cost conic subproblem per clique
against the current consensus iterate, averages overlapping entries into the
consensus variable, and updates the scaled duals. The penalty follows the
standard residual-balancing adaptation; stopping uses relative thresholds on
the stacked primal and dual residual norms.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_dsdp
from .chordal import CliqueDecomposition, manual_chain_decomposition
from .dsdp import DsdpResult, stitch
from .model import LiftedProblem
from .solver import SolverSettings, solve
from .symmat import mat, vech_len


class AdmmError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdmmConfig:
    rho0: float = 1.0
    mu: float = 10.0  # residual imbalance triggering penalty adaptation
    tau_scale: float = 2.0
    eps_rel: float = 1e-10
    max_outer_iterations: int = 10
    fixed_iterations: int | None = None
    inner_tol: float = 1e-3
    n_workers: int = 1

    def __post_init__(self):
        if self.rho0 <= 0 or self.mu <= 1 or self.tau_scale <= 1:
            raise ValueError("need rho0 > 0, mu > 1, tau_scale > 1")


@dataclass
class AdmmState:
    z: np.ndarray
    lambdas: list[np.ndarray]
    rho: float
    iteration: int
    history: list[dict] = field(default_factory=list)


def penalty_adapt(rho, lambdas, pri_norm, dual_norm, config: AdmmConfig):
    """Residual-balancing update; duals are rescaled so lambda/rho persists."""
    if pri_norm > config.mu * dual_norm:
        new_rho = rho * config.tau_scale
    elif dual_norm > config.mu * pri_norm:
        new_rho = rho / config.tau_scale
    else:
        return rho, lambdas
    factor = new_rho / rho
    return new_rho, [lam * factor for lam in lambdas]


def dual_update(lam, z_sel, c, rho):
    return lam + rho * (z_sel - c)


class ConsensusAdmm:
    """Workspace holding per-clique subprograms and consensus index maps."""

    def __init__(
        self,
        problem: LiftedProblem,
        decomposition: CliqueDecomposition | None = None,
        config: AdmmConfig | None = None,
    ):
        self.problem = problem
        self.config = config or AdmmConfig()
        if decomposition is None:
            decomposition = manual_chain_decomposition(problem)
        self.decomposition = decomposition
        self.program = assemble_dsdp(problem, decomposition)
        prog = self.program
        self.T = prog.n_blocks

        # rows for clique t exclude the overlap rows: those become consensus
        A = prog.A.tocsr()
        offs = prog.block_offsets
        self.sub_A, self.sub_b = [], []
        for t in range(self.T):
            rows = []
            for r in range(prog.n_rows):
                if prog.row_kinds[r] == "overlap":
                    continue
                cols = A.indices[A.indptr[r] : A.indptr[r + 1]]
                if len(cols) and offs[t] <= cols[0] < offs[t + 1]:
                    rows.append(r)
            self.sub_A.append(A[rows, offs[t] : offs[t + 1]].tocsr())
            self.sub_b.append(prog.b[rows])

        # consensus indexing: map each clique vech entry to a slot keyed by
        # the semantic coordinate pair it represents
        pair_slots: dict[tuple[int, int], int] = {}
        self.selectors = []
        for t in range(self.T):
            sem = prog.block_semantics[t]
            side = prog.block_sides[t]
            sel = np.empty(vech_len(side), dtype=int)
            idx = 0
            for j in range(side):
                for i in range(j + 1):
                    key = (int(sem[i]), int(sem[j]))
                    key = key if key[0] <= key[1] else (key[1], key[0])
                    slot = pair_slots.setdefault(key, len(pair_slots))
                    sel[idx] = slot
                    idx += 1
            self.selectors.append(sel)
        self.n_z = len(pair_slots)
        counts = np.zeros(self.n_z)
        for sel in self.selectors:
            np.add.at(counts, sel, 1.0)
        self.counts = counts

        self.cost_scale = max(1.0, float(np.abs(prog.cost).max()))
        self.sub_cost = [
            prog.cost[prog.block_slice(t)] / self.cost_scale for t in range(self.T)
        ]

    # ADMM steps ---------------------------------------------------------

    def clique_subproblem(self, t, z, lam_t, rho, settings: SolverSettings):
        """Solve the clique's proximal conic program; returns its vech iterate."""
        prog = self.program
        side = prog.block_sides[t]
        d = vech_len(side)
        lin = self.sub_cost[t] - lam_t - rho * z[self.selectors[t]]
        sub = prog.__class__(
            block_sides=(side,),
            cost=lin,
            A=self.sub_A[t],
            b=self.sub_b[t],
            quad=rho * sp.identity(d, format="csr"),
            block_semantics=[prog.block_semantics[t]],
            semantic_node=prog.semantic_node,
            row_kinds=["generic"] * self.sub_A[t].shape[0],
        )
        sol = solve(sub, settings)
        x = sol.blocks[0]
        if not np.all(np.isfinite(x)) or sol.status == "infeasible-detected":
            raise AdmmError(f"clique {t} subproblem failed with status {sol.status}")
        from .symmat import vech

        return vech(x)

    def consensus_update(self, c_list, lambdas, rho):
        """Exact minimizer over z: average of (c - lambda/rho) per entry."""
        z = np.zeros(self.n_z)
        for sel, c, lam in zip(self.selectors, c_list, lambdas):
            np.add.at(z, sel, c - lam / rho)
        return z / self.counts

    def residuals(self, z, z_prev, c_list):
        pri_sq = 0.0
        dual_sq = 0.0
        z_norm_sq = 0.0
        c_norm_sq = 0.0
        dz = z - z_prev
        for sel, c in zip(self.selectors, c_list):
            r = z[sel] - c
            pri_sq += float(r @ r)
            d = dz[sel]
            dual_sq += float(d @ d)
            z_norm_sq += float(z[sel] @ z[sel])
            c_norm_sq += float(c @ c)
        return (
            np.sqrt(pri_sq),
            np.sqrt(dual_sq),
            np.sqrt(z_norm_sq),
            np.sqrt(c_norm_sq),
        )

    def objective(self, c_list) -> float:
        val = sum(float(q @ c) for q, c in zip(self.sub_cost, c_list))
        return val * self.cost_scale + self.program.objective_offset

    def run(self) -> tuple[DsdpResult, AdmmState]:
        cfg = self.config
        inner = SolverSettings(tol=cfg.inner_tol)
        rho = cfg.rho0
        z = np.zeros(self.n_z)
        lambdas = [np.zeros(vech_len(s)) for s in self.program.block_sides]
        history = []
        c_list = [np.zeros(vech_len(s)) for s in self.program.block_sides]

        n_iter = (
            cfg.fixed_iterations
            if cfg.fixed_iterations is not None
            else cfg.max_outer_iterations
        )
        workers = max(1, cfg.n_workers)
        it = 0
        for it in range(n_iter):
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    c_list = list(
                        pool.map(
                            lambda t: self.clique_subproblem(
                                t, z, lambdas[t], rho, inner
                            ),
                            range(self.T),
                        )
                    )
            else:
                c_list = [
                    self.clique_subproblem(t, z, lambdas[t], rho, inner)
                    for t in range(self.T)
                ]
            z_prev = z
            z = self.consensus_update(c_list, lambdas, rho)
            lambdas = [
                dual_update(lam, z[sel], c, rho)
                for lam, sel, c in zip(lambdas, self.selectors, c_list)
            ]
            pri, dual_raw, z_norm, c_norm = self.residuals(z, z_prev, c_list)
            dual = rho * dual_raw
            lam_norm = np.sqrt(sum(float(l @ l) for l in lambdas))
            history.append(
                dict(
                    iter=it,
                    rho=rho,
                    pri_res=pri,
                    dual_res=dual,
                    objective=self.objective(c_list),
                )
            )
            if cfg.fixed_iterations is None:
                eps_pri = cfg.eps_rel * max(z_norm, c_norm)
                eps_dual = cfg.eps_rel * lam_norm
                if pri <= eps_pri and dual <= eps_dual:
                    it += 1
                    break
            rho, lambdas = penalty_adapt(rho, lambdas, pri, dual, cfg)

        # package the clique iterates like a centralized result
        prog = self.program
        mats = []
        for t, c in enumerate(c_list):
            M = mat(c)
            if prog.coordinate_scales is not None:
                dvec = prog.coordinate_scales[prog.block_semantics[t]]
                M = M * np.outer(dvec, dvec)
            mats.append(M)
        entries, overlap_gap = stitch(mats, prog.block_semantics)
        result = DsdpResult(
            solution=None,
            clique_matrices=mats,
            block_semantics=prog.block_semantics,
            decomposition=self.decomposition,
            stitched=entries,
            objective=self.objective(c_list),
            solve_time=0.0,
            overlap_gap=overlap_gap,
            extra={"status": "admm", "iterations": len(history)},
        )
        state = AdmmState(
            z=z, lambdas=lambdas, rho=rho, iteration=len(history), history=history
        )
        return result, state


def run(
    problem: LiftedProblem,
    decomposition: CliqueDecomposition | None = None,
    config: AdmmConfig | None = None,
) -> tuple[DsdpResult, AdmmState]:
    return ConsensusAdmm(problem, decomposition, config).run()


def thread_cap() -> int:
    """Parallelism cap from the environment, default 1."""
    try:
        return max(1, int(os.environ.get("CHORDAL_SDP_THREADS", "1")))
    except ValueError:
        return 1


def write_residual_log(state: AdmmState, path: str) -> None:
    with open(path, "w") as f:
        f.write("iter,rho,pri_res,dual_res,objective\n")
        for row in state.history:
            f.write(
                f"{row['iter']},{row['rho']!r},{row['pri_res']!r},"
                f"{row['dual_res']!r},{row['objective']!r}\n"
            )
