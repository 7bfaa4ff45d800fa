"""Tightness certification, solution extraction, and accuracy metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsdp import DsdpResult
from .geometry import chordal_distance, project_to_so3
from .model import LiftedProblem, LiftedPoint, constraint_residuals
from .mw import raw_to_state
from .symmat import eig_desc

EVR_FLOOR = 1e-14
EVR_CAP = 1e14


class ExtractionError(RuntimeError):
    """The relaxation solution is too far from rank one to extract a state."""


class DegenerateSolutionError(ValueError):
    pass


@dataclass
class Certificate:
    evr: float
    lambda0: float
    lambda1: float
    extraction_residual: float
    duality_gap: float


def evr(X: np.ndarray) -> float:
    """Ratio of the two largest eigenvalues, floor-clamped for rank-1 inputs."""
    w, _ = eig_desc(X)
    lam0 = float(w[0])
    if lam0 <= 0:
        raise DegenerateSolutionError("leading eigenvalue is not positive")
    lam1 = float(w[1]) if len(w) > 1 else 0.0
    if lam1 <= EVR_FLOOR * lam0:
        return EVR_CAP
    return min(lam0 / lam1, EVR_CAP)


def _clique_vectors(result: DsdpResult) -> tuple[list[np.ndarray], float, float, float]:
    """Leading eigenvectors per clique, h-normalized; returns min-EVR stats."""
    vectors = []
    best = (np.inf, 0.0, 0.0)
    for C in result.clique_matrices:
        w, V = eig_desc(C)
        lam0 = float(w[0])
        if lam0 <= 0:
            raise DegenerateSolutionError("clique matrix has no positive eigenvalue")
        lam1 = float(w[1]) if len(w) > 1 else 0.0
        if lam1 <= EVR_FLOOR * lam0:
            r = EVR_CAP
        else:
            r = min(lam0 / lam1, EVR_CAP)
        if r < best[0]:
            best = (r, lam0, lam1)
        v = V[:, 0]
        if abs(v[0]) < 1e-6:
            raise ExtractionError(
                "homogenization entry of the leading eigenvector is near zero"
            )
        vectors.append(v / v[0])  # also aligns signs through the shared h
    return vectors, best[0], best[1], best[2]


def extract_state(result: DsdpResult, problem: LiftedProblem):
    """Rank-1 state extraction with overlap averaging and a tightness report.

    Returns (states, certificate); states are per-problem-kind raw objects:
    an (N, 6) array for range-only problems, a (rotations, translations) pair
    with projected rotations for pose problems, and per-block raw vectors
    otherwise.
    """
    vectors, min_evr, lam0, lam1 = _clique_vectors(result)

    sums = np.zeros(problem.total_dim)
    counts = np.zeros(problem.total_dim)
    for v, sem in zip(vectors, result.block_semantics):
        sums[sem] += v
        counts[sem] += 1
    x = sums / np.maximum(counts, 1)
    x[0] = 1.0

    widths = [b.width for b in problem.blocks]
    raw_blocks = []
    off = 1
    for w in widths:
        raw_blocks.append(x[off : off + w])
        off += w

    if problem.kind == "ctro":
        states = np.stack([rb[:6] for rb in raw_blocks])
        lifted = LiftedPoint(h=1.0, block_values=[np.concatenate([rb[:6], [rb[:3] @ rb[:3]]]) for rb in raw_blocks])
    elif problem.kind == "mw":
        rotations, translations = [], []
        for rb in raw_blocks:
            C, t = raw_to_state(rb)
            rotations.append(project_to_so3(C))
            translations.append(t)
        states = (np.stack(rotations), np.stack(translations))
        lifted = LiftedPoint(
            h=1.0,
            block_values=[
                np.concatenate([C.ravel(order="F"), t])
                for C, t in zip(states[0], states[1])
            ],
        )
    else:
        states = raw_blocks
        lifted = LiftedPoint(h=1.0, block_values=list(raw_blocks))

    residual = float(np.abs(constraint_residuals(problem, lifted)).max())
    gap = result.solution.gap if result.solution is not None else float("nan")
    cert = Certificate(
        evr=min_evr,
        lambda0=lam0,
        lambda1=lam1,
        extraction_residual=residual,
        duality_gap=gap,
    )
    return states, cert


@dataclass
class AccuracyReport:
    pos_rmse: float
    vel_rmse: float | None = None
    rot_rmse: float | None = None


def accuracy(est, gt, kind: str) -> AccuracyReport:
    """RMSE errors: Euclidean for vector quantities, chordal for rotations."""
    if kind == "ctro":
        est = np.asarray(est)
        gt = np.asarray(gt)
        pos = np.linalg.norm(est[:, :3] - gt[:, :3], axis=1)
        vel = np.linalg.norm(est[:, 3:6] - gt[:, 3:6], axis=1)
        return AccuracyReport(
            pos_rmse=float(np.sqrt(np.mean(pos**2))),
            vel_rmse=float(np.sqrt(np.mean(vel**2))),
        )
    if kind == "mw":
        est_rot, est_t = est
        gt_rot, gt_t = gt
        pos = np.linalg.norm(np.asarray(est_t) - np.asarray(gt_t), axis=1)
        rot = np.array(
            [chordal_distance(Ce, Cg) for Ce, Cg in zip(est_rot, gt_rot)]
        )
        return AccuracyReport(
            pos_rmse=float(np.sqrt(np.mean(pos**2))),
            rot_rmse=float(np.sqrt(np.mean(rot**2))),
        )
    raise ValueError(f"unknown problem kind {kind!r}")
