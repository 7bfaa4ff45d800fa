"""Lifted quadratic model of a localization problem.

A :class:`LiftedProblem` is the quadratic factor graph produced by lifting a
nonlinear least-squares problem: variable blocks with layout
``[h, state, lift]``, quadratic cost factors over one block or an ordered
pair, and per-block quadratic constraint factors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .symmat import symmetrize

CONSTRAINT_KINDS = ("primary", "substitution", "redundant", "homogenization")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class VarBlock:
    index: int
    state_dim: int
    lift_dim: int
    labels: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        """Number of lifted coordinates excluding the shared h."""
        return self.state_dim + self.lift_dim

    @property
    def local_dim(self) -> int:
        return 1 + self.width


@dataclass(frozen=True)
class CostFactor:
    """Quadratic cost x' M x over one block (k,) or an ordered pair (i, j).

    Pair factors act on the stacked local vector [h, xi_i, l_i, xi_j, l_j]
    with a single shared h. When the factor comes from a weighted residual
    e = B x, the (basis, weight) pair is kept alongside matrix = B' W B;
    evaluating through the residual avoids the cancellation that the large
    entries of the squared form incur.
    """

    scope: tuple[int, ...]
    matrix: np.ndarray
    basis: np.ndarray | None = None
    weight: np.ndarray | None = None

    def value(self, x: np.ndarray) -> float:
        if self.basis is not None:
            e = self.basis @ x
            if self.weight is None:
                return float(e @ e)
            return float(e @ self.weight @ e)
        return float(x @ self.matrix @ x)


@dataclass(frozen=True)
class ConstraintFactor:
    """Quadratic equality x_k' A x_k = rhs over a single block."""

    block: int
    matrix: np.ndarray
    rhs: float
    kind: str


@dataclass
class LiftedProblem:
    blocks: list[VarBlock]
    cost_factors: list[CostFactor] = field(default_factory=list)
    constraint_factors: list[ConstraintFactor] = field(default_factory=list)
    relative_scopes: list[tuple[int, int]] = field(default_factory=list)
    kind: str = "generic"
    lift_state: Callable[[np.ndarray], np.ndarray] | None = None
    coordinate_scales: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.validate()

    # layout -----------------------------------------------------------

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_offset(self, k: int) -> int:
        """Offset of block k's coordinates in the combined lifted vector."""
        return 1 + sum(b.width for b in self.blocks[:k])

    @property
    def total_dim(self) -> int:
        return 1 + sum(b.width for b in self.blocks)

    def validate(self) -> None:
        rel = set(self.relative_scopes)
        homog_count = {b.index: 0 for b in self.blocks}
        for f in self.cost_factors:
            if len(f.scope) == 2 and tuple(f.scope) not in rel:
                raise ModelError(f"pair cost scope {f.scope} not in relative_scopes")
            want = self._scope_dim(f.scope)
            if f.matrix.shape != (want, want):
                raise ModelError(
                    f"cost factor over {f.scope}: matrix {f.matrix.shape}, "
                    f"expected {(want, want)}"
                )
        for c in self.constraint_factors:
            if c.kind not in CONSTRAINT_KINDS:
                raise ModelError(f"unknown constraint kind {c.kind!r}")
            d = self.blocks[c.block].local_dim
            if c.matrix.shape != (d, d):
                raise ModelError(
                    f"constraint on block {c.block}: matrix {c.matrix.shape}, "
                    f"expected {(d, d)}"
                )
            if c.kind == "homogenization":
                homog_count[c.block] += 1
        if any(n != 1 for n in homog_count.values()):
            raise ModelError("each block needs exactly one homogenization constraint")

    def _scope_dim(self, scope: tuple[int, ...]) -> int:
        return 1 + sum(self.blocks[k].width for k in scope)


@dataclass
class LiftedPoint:
    """A candidate assignment: h plus per-block [state, lift] values."""

    h: float
    block_values: list[np.ndarray]

    def local_vector(self, k: int) -> np.ndarray:
        return np.concatenate(([self.h], self.block_values[k]))

    def pair_vector(self, i: int, j: int) -> np.ndarray:
        return np.concatenate(([self.h], self.block_values[i], self.block_values[j]))

    def full_vector(self) -> np.ndarray:
        return np.concatenate([[self.h]] + list(self.block_values))


def homogenization_factor(block: int, local_dim: int) -> ConstraintFactor:
    """The constraint h^2 = 1 on a block's local vector."""
    A = np.zeros((local_dim, local_dim))
    A[0, 0] = 1.0
    return ConstraintFactor(block=block, matrix=A, rhs=1.0, kind="homogenization")


def lift_point(problem: LiftedProblem, raw_states: Sequence[np.ndarray]) -> LiftedPoint:
    """Lift raw per-block states using the problem's lifting rule; h = 1."""
    if len(raw_states) != problem.n_blocks:
        raise ModelError(f"expected {problem.n_blocks} states, got {len(raw_states)}")
    values = []
    for blk, xi in zip(problem.blocks, raw_states):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (blk.state_dim,):
            raise ModelError(
                f"block {blk.index}: state shape {xi.shape}, expected ({blk.state_dim},)"
            )
        if blk.lift_dim == 0:
            lifted = np.zeros(0)
        else:
            if problem.lift_state is None:
                raise ModelError("problem has lifted coordinates but no lifting rule")
            lifted = np.atleast_1d(np.asarray(problem.lift_state(xi), dtype=float))
            if lifted.shape != (blk.lift_dim,):
                raise ModelError(
                    f"lift rule returned shape {lifted.shape}, expected ({blk.lift_dim},)"
                )
        values.append(np.concatenate([xi, lifted]))
    return LiftedPoint(h=1.0, block_values=values)


def evaluate_cost(problem: LiftedProblem, p: LiftedPoint) -> float:
    total = 0.0
    for f in problem.cost_factors:
        if len(f.scope) == 1:
            x = p.local_vector(f.scope[0])
        else:
            x = p.pair_vector(*f.scope)
        total += f.value(x)
    return total


def constraint_residuals(problem: LiftedProblem, p: LiftedPoint) -> np.ndarray:
    """Per-constraint values x' A x - rhs, in constraint_factors order."""
    res = np.empty(len(problem.constraint_factors))
    for idx, c in enumerate(problem.constraint_factors):
        x = p.local_vector(c.block)
        res[idx] = float(x @ c.matrix @ x) - c.rhs
    return res


# JSON serialization ------------------------------------------------------


def to_json_dict(problem: LiftedProblem) -> dict:
    return {
        "kind": problem.kind,
        "blocks": [
            {
                "index": b.index,
                "state_dim": b.state_dim,
                "lift_dim": b.lift_dim,
                "labels": list(b.labels),
            }
            for b in problem.blocks
        ],
        "cost_factors": [
            {"scope": list(f.scope), "matrix": f.matrix.ravel().tolist()}
            for f in problem.cost_factors
        ],
        "constraint_factors": [
            {
                "block": c.block,
                "matrix": c.matrix.ravel().tolist(),
                "rhs": c.rhs,
                "kind": c.kind,
            }
            for c in problem.constraint_factors
        ],
        "relative_scopes": [list(s) for s in problem.relative_scopes],
    }


def from_json_dict(
    doc: dict, lift_state: Callable[[np.ndarray], np.ndarray] | None = None
) -> LiftedProblem:
    blocks = [
        VarBlock(
            index=b["index"],
            state_dim=b["state_dim"],
            lift_dim=b["lift_dim"],
            labels=tuple(b.get("labels", ())),
        )
        for b in doc["blocks"]
    ]

    def as_sym(values: list[float]) -> np.ndarray:
        n = int(round(len(values) ** 0.5))
        return symmetrize(np.asarray(values, dtype=float).reshape(n, n))

    return LiftedProblem(
        blocks=blocks,
        cost_factors=[
            CostFactor(scope=tuple(f["scope"]), matrix=as_sym(f["matrix"]))
            for f in doc["cost_factors"]
        ],
        constraint_factors=[
            ConstraintFactor(
                block=c["block"], matrix=as_sym(c["matrix"]), rhs=c["rhs"], kind=c["kind"]
            )
            for c in doc["constraint_factors"]
        ],
        relative_scopes=[tuple(s) for s in doc["relative_scopes"]],
        kind=doc.get("kind", "generic"),
        lift_state=lift_state,
    )


def save_json(problem: LiftedProblem, path: str) -> None:
    with open(path, "w") as f:
        json.dump(to_json_dict(problem), f)


def load_json(path: str, lift_state=None) -> LiftedProblem:
    with open(path) as f:
        return from_json_dict(json.load(f), lift_state=lift_state)
