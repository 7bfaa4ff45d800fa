"""Vectorized conic programs from lifted problems.

Builds the monolithic single-block relaxation and the clique-decomposed
multi-block form with overlap equality rows and split node costs. Variables
are the scaled half-vectorizations of the per-block PSD matrices; a constraint
row is the half-vectorization of its embedded constraint matrix, so row-vector
inner products equal matrix traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .chordal import CliqueDecomposition, DecompositionError, validate_decomposition
from .model import LiftedProblem
from .symmat import SQRT2, tri_pairs, vech_len

ROW_KINDS = ("primary", "substitution", "redundant", "homogenization", "overlap", "generic")


class AssemblyError(ValueError):
    pass


@dataclass
class ConicProgram:
    """Standard-form program over a product of PSD cones.

    minimize    cost' x (+ 1/2 x' quad x)
    subject to  A x = b,  mat(x_t) >= 0 per block,

    where x concatenates per-block scaled half-vectorizations. Each block
    carries the semantic coordinate ids of its matrix rows so that shared
    entries across blocks can be identified.
    """

    block_sides: tuple[int, ...]
    cost: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    quad: sp.csr_matrix | None = None
    block_semantics: list[np.ndarray] = field(default_factory=list)
    semantic_node: np.ndarray | None = None
    row_kinds: list[str] = field(default_factory=list)
    coordinate_scales: np.ndarray | None = None
    # constant cost carried by entries pinned through homogenization rows;
    # keeping it out of the cost vector preserves the solver's gap resolution
    objective_offset: float = 0.0

    @property
    def n_blocks(self) -> int:
        return len(self.block_sides)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def block_offsets(self) -> np.ndarray:
        lens = [vech_len(s) for s in self.block_sides]
        return np.concatenate([[0], np.cumsum(lens)])

    def block_slice(self, t: int) -> slice:
        off = self.block_offsets
        return slice(int(off[t]), int(off[t + 1]))

    def cost_block(self, t: int) -> np.ndarray:
        return self.cost[self.block_slice(t)]

    def with_cost(self, cost: np.ndarray, quad=None) -> "ConicProgram":
        return replace(self, cost=cost, quad=quad)


@dataclass
class OverlapMap:
    """Per clique-tree edge, paired vech indices of the shared entries."""

    edges: list[tuple[int, int, np.ndarray, np.ndarray]]


def semantic_ids(problem: LiftedProblem, block: int) -> np.ndarray:
    off = problem.block_offset(block)
    return np.arange(off, off + problem.blocks[block].width)


def _semantic_node_array(problem: LiftedProblem) -> np.ndarray:
    owner = np.full(problem.total_dim, -1, dtype=int)
    for k, blk in enumerate(problem.blocks):
        off = problem.block_offset(k)
        owner[off : off + blk.width] = k
    return owner


def _embed(positions: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map a dense symmetric matrix at given block positions to vech entries."""
    k = len(positions)
    a, b = np.triu_indices(k)
    pi = positions[a]
    pj = positions[b]
    lo = np.minimum(pi, pj)
    hi = np.maximum(pi, pj)
    idx = hi * (hi + 1) // 2 + lo
    vals = np.where(a == b, 1.0, SQRT2) * M[a, b]
    return idx, vals


def _scaled(M: np.ndarray, sem: np.ndarray, scales: np.ndarray | None) -> np.ndarray:
    if scales is None:
        return M
    d = scales[sem]
    return M * np.outer(d, d)


def _resolve_scales(problem: LiftedProblem, scales) -> np.ndarray | None:
    if scales is None:
        scales = problem.coordinate_scales
    if scales is None:
        return None
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (problem.total_dim,):
        raise AssemblyError("coordinate scales length mismatch")
    if scales[0] != 1.0:
        raise AssemblyError("the homogenization coordinate must keep scale 1")
    return scales


def assemble_full(problem: LiftedProblem, scales=None) -> ConicProgram:
    """Single-block relaxation over the combined lifted vector."""
    scales = _resolve_scales(problem, scales)
    side = problem.total_dim
    cost = np.zeros(vech_len(side))

    def scope_semantics(scope):
        parts = [np.array([0])]
        for k in scope:
            parts.append(semantic_ids(problem, k))
        return np.concatenate(parts)

    for f in problem.cost_factors:
        sem = scope_semantics(f.scope)
        idx, vals = _embed(sem, _scaled(f.matrix, sem, scales))
        np.add.at(cost, idx, vals)

    rows, cols, vals, rhs, kinds = [], [], [], [], []
    r = 0
    for c in problem.constraint_factors:
        if c.kind == "homogenization":
            continue
        sem = scope_semantics((c.block,))
        idx, v = _embed(sem, _scaled(c.matrix, sem, scales))
        keep = v != 0.0
        rows.extend([r] * int(keep.sum()))
        cols.extend(idx[keep].tolist())
        vals.extend(v[keep].tolist())
        rhs.append(c.rhs)
        kinds.append(c.kind)
        r += 1
    # single homogenization row: the (0, 0) entry is pinned to 1
    rows.append(r)
    cols.append(0)
    vals.append(1.0)
    rhs.append(1.0)
    kinds.append("homogenization")
    r += 1

    A = sp.csr_matrix(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))), shape=(r, vech_len(side))
    )
    offset = cost[0]  # the h diagonal entry, pinned to 1
    cost[0] = 0.0
    return ConicProgram(
        block_sides=(side,),
        cost=cost,
        A=A,
        b=np.asarray(rhs),
        block_semantics=[np.arange(side)],
        semantic_node=_semantic_node_array(problem),
        row_kinds=kinds,
        coordinate_scales=scales,
        objective_offset=float(offset),
    )


def assemble_dsdp(
    problem: LiftedProblem, dec: CliqueDecomposition, scales=None
) -> ConicProgram:
    """One PSD block per clique, with overlap equality rows across tree edges."""
    validate_decomposition(dec, problem)
    scales = _resolve_scales(problem, scales)
    T = dec.n_cliques

    sides = []
    semantics = []
    posmaps: list[dict[int, int]] = []
    for members in dec.cliques:
        sem = [0]
        for k in members:
            sem.extend(semantic_ids(problem, k).tolist())
        sem = np.asarray(sem)
        sides.append(len(sem))
        semantics.append(sem)
        posmaps.append({int(s): p for p, s in enumerate(sem)})

    offsets = np.concatenate([[0], np.cumsum([vech_len(s) for s in sides])])
    total_vars = int(offsets[-1])
    cost = np.zeros(total_vars)

    def clique_positions(t, sem):
        return np.asarray([posmaps[t][int(s)] for s in sem])

    owners = {k: dec.cliques_containing(k) for k in range(problem.n_blocks)}

    for f in problem.cost_factors:
        sem = np.concatenate(
            [[0]] + [semantic_ids(problem, k) for k in f.scope]
        )
        if len(f.scope) == 1:
            targets = owners[f.scope[0]]
            weight = 1.0 / len(targets)
        else:
            both = [t for t in owners[f.scope[0]] if t in set(owners[f.scope[1]])]
            if not both:
                raise DecompositionError(
                    f"relative cost {f.scope} has endpoints in no common clique"
                )
            targets = [min(both)]
            weight = 1.0
        M = _scaled(f.matrix, sem, scales)
        for t in targets:
            idx, vals = _embed(clique_positions(t, sem), weight * M)
            np.add.at(cost, offsets[t] + idx, vals)

    rows, cols, vals, rhs, kinds = [], [], [], [], []
    r = 0

    def emit(col_idx, col_vals, rhs_val, kind):
        nonlocal r
        keep = col_vals != 0.0
        n = int(keep.sum())
        rows.extend([r] * n)
        cols.extend(np.asarray(col_idx)[keep].tolist())
        vals.extend(np.asarray(col_vals)[keep].tolist())
        rhs.append(rhs_val)
        kinds.append(kind)
        r += 1

    for t in range(T):
        for c in problem.constraint_factors:
            if c.kind == "homogenization" or min(owners[c.block]) != t:
                continue
            sem = np.concatenate([[0], semantic_ids(problem, c.block)])
            idx, v = _embed(clique_positions(t, sem), _scaled(c.matrix, sem, scales))
            emit(offsets[t] + idx, v, c.rhs, c.kind)
        emit(np.array([offsets[t]]), np.array([1.0]), 1.0, "homogenization")

    for a, b_cl, shared in dec.tree_edges:
        shared_sem = np.concatenate(
            [[0]] + [semantic_ids(problem, k) for k in shared]
        )
        pa = clique_positions(a, shared_sem)
        pb = clique_positions(b_cl, shared_sem)
        u, v = np.triu_indices(len(shared_sem))
        idx_a = np.maximum(pa[u], pa[v]) * (np.maximum(pa[u], pa[v]) + 1) // 2 + np.minimum(
            pa[u], pa[v]
        )
        idx_b = np.maximum(pb[u], pb[v]) * (np.maximum(pb[u], pb[v]) + 1) // 2 + np.minimum(
            pb[u], pb[v]
        )
        for ia, ib in zip(idx_a, idx_b):
            emit(
                np.array([offsets[a] + ia, offsets[b_cl] + ib]),
                np.array([1.0, -1.0]),
                0.0,
                "overlap",
            )

    A = sp.csr_matrix(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))), shape=(r, total_vars)
    )
    offset = 0.0
    for t in range(T):
        offset += cost[offsets[t]]  # each clique's h diagonal entry is pinned
        cost[offsets[t]] = 0.0
    return ConicProgram(
        block_sides=tuple(sides),
        cost=cost,
        A=A,
        b=np.asarray(rhs),
        block_semantics=semantics,
        semantic_node=_semantic_node_array(problem),
        row_kinds=kinds,
        coordinate_scales=scales,
        objective_offset=float(offset),
    )


def homogenization_rows(program: ConicProgram) -> tuple[sp.csr_matrix, np.ndarray]:
    """One row per block pinning the h diagonal entry to 1."""
    rows, cols = [], []
    offsets = program.block_offsets
    r = 0
    for t, sem in enumerate(program.block_semantics):
        hits = np.nonzero(sem == 0)[0]
        if len(hits) == 0:
            continue
        p = int(hits[0])
        rows.append(r)
        cols.append(int(offsets[t]) + p * (p + 1) // 2 + p)
        r += 1
    A = sp.csr_matrix(
        (np.ones(len(rows)), (np.asarray(rows), np.asarray(cols))),
        shape=(r, program.n_vars),
    )
    return A, np.ones(r)


def build_overlap_map(dec: CliqueDecomposition, problem: LiftedProblem) -> OverlapMap:
    program_sem = []
    posmaps = []
    for members in dec.cliques:
        sem = [0]
        for k in members:
            sem.extend(semantic_ids(problem, k).tolist())
        program_sem.append(sem)
        posmaps.append({int(s): p for p, s in enumerate(sem)})
    edges = []
    for a, b, shared in dec.tree_edges:
        shared_sem = np.concatenate([[0]] + [semantic_ids(problem, k) for k in shared])
        pa = np.asarray([posmaps[a][int(s)] for s in shared_sem])
        pb = np.asarray([posmaps[b][int(s)] for s in shared_sem])
        u, v = np.triu_indices(len(shared_sem))
        ia = np.maximum(pa[u], pa[v]) * (np.maximum(pa[u], pa[v]) + 1) // 2 + np.minimum(
            pa[u], pa[v]
        )
        ib = np.maximum(pb[u], pb[v]) * (np.maximum(pb[u], pb[v]) + 1) // 2 + np.minimum(
            pb[u], pb[v]
        )
        edges.append((a, b, ia, ib))
    return OverlapMap(edges=edges)


# Sparse text fixtures -------------------------------------------------------


def save_program_text(program: ConicProgram, path: str) -> None:
    off = program.block_offsets
    with open(path, "w") as f:
        f.write("# chordalloc conic program v1\n")
        f.write("blocks " + " ".join(str(s) for s in program.block_sides) + "\n")
        for t in range(program.n_blocks):
            c = program.cost_block(t)
            for entry in np.nonzero(c)[0]:
                f.write(f"cost {t} {entry} {float(c[entry])!r}\n")
        A = program.A.tocoo()
        block_of = np.searchsorted(off, A.col, side="right") - 1
        for r, col, v, t in zip(A.row, A.col, A.data, block_of):
            f.write(f"con {r} {t} {col - off[t]} {float(v)!r}\n")
        for r, v in enumerate(program.b):
            f.write(f"rhs {r} {float(v)!r}\n")


def load_program_text(path: str) -> ConicProgram:
    sides = None
    cost_entries, con_entries, rhs_entries = [], [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "blocks":
                sides = tuple(int(x) for x in parts[1:])
            elif parts[0] == "cost":
                cost_entries.append((int(parts[1]), int(parts[2]), float(parts[3])))
            elif parts[0] == "con":
                con_entries.append(
                    (int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]))
                )
            elif parts[0] == "rhs":
                rhs_entries.append((int(parts[1]), float(parts[2])))
            else:
                raise AssemblyError(f"unknown record {parts[0]!r}")
    if sides is None:
        raise AssemblyError("missing blocks header")
    lens = [vech_len(s) for s in sides]
    off = np.concatenate([[0], np.cumsum(lens)])
    cost = np.zeros(int(off[-1]))
    for t, entry, v in cost_entries:
        cost[off[t] + entry] += v
    n_rows = max((r for r, _ in rhs_entries), default=-1) + 1
    b = np.zeros(n_rows)
    for r, v in rhs_entries:
        b[r] = v
    rows = [r for r, _, _, _ in con_entries]
    cols = [off[t] + e for _, t, e, _ in con_entries]
    vals = [v for _, _, _, v in con_entries]
    A = sp.csr_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
        shape=(n_rows, int(off[-1])),
    )
    # semantics: fixture blocks are standalone, no shared coordinates
    sem = []
    start = 0
    for s in sides:
        sem.append(np.arange(start, start + s))
        start += s
    return ConicProgram(
        block_sides=sides,
        cost=cost,
        A=A,
        b=b,
        block_semantics=sem,
        row_kinds=["generic"] * n_rows,
    )
