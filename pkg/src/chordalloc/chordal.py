"""Sparsity graphs, chordal decompositions, and clique trees.

Decompositions are over variable blocks; the shared homogenization variable
is implicit and belongs to every clique.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import LiftedProblem
from .symmat import min_eig


class DecompositionError(ValueError):
    pass


class NotAChainError(DecompositionError):
    pass


@dataclass(frozen=True)
class SparsityGraph:
    n_vertices: int
    edges: frozenset[tuple[int, int]]  # (i, j) with i < j

    def neighbors(self, v: int) -> set[int]:
        out = set()
        for i, j in self.edges:
            if i == v:
                out.add(j)
            elif j == v:
                out.add(i)
        return out

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges


@dataclass
class CliqueDecomposition:
    """Maximal cliques over block indices plus a clique tree.

    tree_edges entries are (clique_a, clique_b, shared block tuple); the
    running-intersection property must hold along the tree.
    """

    cliques: list[tuple[int, ...]]
    tree_edges: list[tuple[int, int, tuple[int, ...]]] = field(default_factory=list)
    order: tuple[int, ...] | None = None

    @property
    def n_cliques(self) -> int:
        return len(self.cliques)

    def cliques_containing(self, block: int) -> list[int]:
        return [t for t, c in enumerate(self.cliques) if block in c]


def aggregate_sparsity(problem: LiftedProblem) -> SparsityGraph:
    """Block-level sparsity: an edge wherever a cost factor couples two blocks."""
    edges = set()
    for f in problem.cost_factors:
        if len(f.scope) == 2:
            i, j = f.scope
            edges.add((min(i, j), max(i, j)))
    return SparsityGraph(n_vertices=problem.n_blocks, edges=frozenset(edges))


def manual_chain_decomposition(problem: LiftedProblem) -> CliqueDecomposition:
    """Cliques {i, i+1} for a chain-ordered problem."""
    n = problem.n_blocks
    graph = aggregate_sparsity(problem)
    expected = frozenset((i, i + 1) for i in range(n - 1))
    if graph.edges != expected:
        raise NotAChainError(
            "aggregate sparsity is not the forward chain over block indices"
        )
    cliques = [(i, i + 1) for i in range(n - 1)]
    tree_edges = [(i, i + 1, (i + 1,)) for i in range(n - 2)]
    return CliqueDecomposition(cliques=cliques, tree_edges=tree_edges)


def chordal_decomposition_auto(graph: SparsityGraph) -> CliqueDecomposition:
    """Greedy minimum-degree elimination with lowest-index tie-breaking."""
    adj = {v: set() for v in range(graph.n_vertices)}
    for i, j in graph.edges:
        adj[i].add(j)
        adj[j].add(i)

    remaining = set(range(graph.n_vertices))
    order = []
    candidates = []
    while remaining:
        v = min(remaining, key=lambda u: (len(adj[u] & remaining), u))
        nbrs = adj[v] & remaining
        candidates.append(frozenset({v} | nbrs))
        nbrs_list = sorted(nbrs)
        for ai, a in enumerate(nbrs_list):
            for b in nbrs_list[ai + 1 :]:
                adj[a].add(b)
                adj[b].add(a)
        remaining.discard(v)
        order.append(v)

    maximal = [c for c in candidates if not any(c < d for d in candidates)]
    cliques = sorted({tuple(sorted(c)) for c in maximal})
    tree_edges = _max_weight_clique_tree(cliques)
    return CliqueDecomposition(
        cliques=[tuple(c) for c in cliques], tree_edges=tree_edges, order=tuple(order)
    )


def _max_weight_clique_tree(cliques) -> list[tuple[int, int, tuple[int, ...]]]:
    """Kruskal on intersection sizes; valid clique trees maximize shared weight."""
    n = len(cliques)
    candidates = []
    for a in range(n):
        for b in range(a + 1, n):
            shared = tuple(sorted(set(cliques[a]) & set(cliques[b])))
            if shared:
                candidates.append((-len(shared), a, b, shared))
    candidates.sort()
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for _, a, b, shared in candidates:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            edges.append((a, b, shared))
    if n > 1 and len(edges) != n - 1:
        raise DecompositionError("clique intersection graph is disconnected")
    return edges


def running_intersection_holds(dec: CliqueDecomposition) -> bool:
    """Shared blocks of any two cliques appear on every clique of the tree path."""
    n = dec.n_cliques
    adj = {t: [] for t in range(n)}
    for a, b, _ in dec.tree_edges:
        adj[a].append(b)
        adj[b].append(a)

    def path(a, b):
        prev = {a: None}
        stack = [a]
        while stack:
            u = stack.pop()
            if u == b:
                break
            for w in adj[u]:
                if w not in prev:
                    prev[w] = u
                    stack.append(w)
        if b not in prev:
            return None
        out = [b]
        while out[-1] != a:
            out.append(prev[out[-1]])
        return out

    for a in range(n):
        for b in range(a + 1, n):
            shared = set(dec.cliques[a]) & set(dec.cliques[b])
            if not shared:
                continue
            p = path(a, b)
            if p is None:
                return False
            for t in p:
                if not shared <= set(dec.cliques[t]):
                    return False
    return True


def validate_decomposition(dec: CliqueDecomposition, problem: LiftedProblem) -> None:
    covered = set()
    for c in dec.cliques:
        covered |= set(c)
    if covered != set(range(problem.n_blocks)):
        raise DecompositionError("cliques do not cover all blocks")
    clique_sets = [set(c) for c in dec.cliques]
    for f in problem.cost_factors:
        if not any(set(f.scope) <= c for c in clique_sets):
            raise DecompositionError(f"cost scope {f.scope} is inside no clique")
    if not running_intersection_holds(dec):
        raise DecompositionError("running-intersection property violated")


def psd_completable_check(
    clique_matrices: list[np.ndarray],
    dec: CliqueDecomposition,
    block_widths: list[int],
    tol: float = 1e-8,
) -> bool:
    """True iff all clique matrices are PSD, after checking overlap agreement.

    Clique matrices are over [h] + member blocks in clique order; agreement of
    shared submatrices across tree edges is a precondition, violations raise.
    """
    def positions(t: int, blocks: tuple[int, ...]) -> np.ndarray:
        pos = [0]
        members = dec.cliques[t]
        offset = 1
        starts = {}
        for b in members:
            starts[b] = offset
            offset += block_widths[b]
        for b in blocks:
            pos.extend(range(starts[b], starts[b] + block_widths[b]))
        return np.asarray(pos)

    for a, b, shared in dec.tree_edges:
        pa = positions(a, shared)
        pb = positions(b, shared)
        Sa = clique_matrices[a][np.ix_(pa, pa)]
        Sb = clique_matrices[b][np.ix_(pb, pb)]
        scale = max(1.0, np.abs(Sa).max())
        if np.abs(Sa - Sb).max() > tol * 10 * scale:
            raise DecompositionError(
                f"clique matrices disagree on overlap of cliques {a} and {b}"
            )

    for C in clique_matrices:
        scale = max(1.0, float(np.abs(C).max()))
        if min_eig(C) < -tol * scale:
            return False
    return True


# JSON dump ----------------------------------------------------------------


def to_json_dict(dec: CliqueDecomposition) -> dict:
    return {
        "cliques": [list(c) for c in dec.cliques],
        "tree_edges": [[a, b, list(s)] for a, b, s in dec.tree_edges],
        "order": list(dec.order) if dec.order is not None else None,
    }


def from_json_dict(doc: dict) -> CliqueDecomposition:
    return CliqueDecomposition(
        cliques=[tuple(c) for c in doc["cliques"]],
        tree_edges=[(a, b, tuple(s)) for a, b, s in doc["tree_edges"]],
        order=tuple(doc["order"]) if doc.get("order") is not None else None,
    )


def save_json(dec: CliqueDecomposition, path: str) -> None:
    with open(path, "w") as f:
        json.dump(to_json_dict(dec), f)


def load_json(path: str) -> CliqueDecomposition:
    with open(path) as f:
        return from_json_dict(json.load(f))
