"""Rotation and rigid-transform helpers (SO(3), SE(3))."""

from __future__ import annotations

import numpy as np

# World-to-camera base orientation with the optical axis pointing down.
Z_DOWN = np.diag([1.0, -1.0, -1.0])


def hat(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula, series-expanded near zero."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < 1e-9:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


def se3_exp(delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponential of (rho, phi) in R^6 to a (rotation, translation) pair."""
    rho = np.asarray(delta[:3], dtype=float)
    phi = np.asarray(delta[3:], dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < 1e-9:
        V = np.eye(3) + 0.5 * K + (K @ K) / 6.0
    else:
        V = (
            np.eye(3)
            + (1.0 - np.cos(theta)) / theta**2 * K
            + (theta - np.sin(theta)) / theta**3 * (K @ K)
        )
    return so3_exp(phi), V @ rho


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project_to_so3(M: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm, with determinant +1 enforced."""
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def chordal_distance(Ca: np.ndarray, Cb: np.ndarray) -> float:
    return float(np.linalg.norm(Ca - Cb, ord="fro"))
