"""Certifiably optimal localization via chordally decomposed SDP relaxations.

Two lifted localization problems (continuous-time range-only, matrix-weighted
pose estimation) are relaxed to semidefinite programs, decomposed along the
clique tree of their aggregate sparsity pattern, and solved either centrally
or by consensus ADMM, with an internal interior-point conic solver.
"""

from . import (
    admm,
    assembly,
    certify,
    chordal,
    ctro,
    dsdp,
    geometry,
    harness,
    local_gn,
    model,
    mw,
    solver,
    symmat,
)

__all__ = [
    "admm",
    "assembly",
    "certify",
    "chordal",
    "ctro",
    "dsdp",
    "geometry",
    "harness",
    "local_gn",
    "model",
    "mw",
    "solver",
    "symmat",
]
