"""Matrix-weighted SE(3) localization with anisotropic landmark measurements.

Poses observe known landmarks as Euclidean points whose inverse covariance
comes from linearizing a stereo pinhole model, plus relative-transform
measurements along the pose chain. The rotation feasible set is encoded by
quadratic orthogonality and handedness constraints on vec(C).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Z_DOWN, rot_z, so3_exp
from .model import (
    ConstraintFactor,
    CostFactor,
    LiftedProblem,
    VarBlock,
    homogenization_factor,
)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MwConfig:
    n_poses: int = 10
    n_landmarks: int = 8
    cube_side: float = 1.0
    pose_box_min: tuple[float, float, float] = (-0.1, -0.1, 2.9)
    pose_box_max: tuple[float, float, float] = (0.1, 0.1, 3.1)
    focal: float = 1077.0
    principal: float = 0.0
    baseline: float = 0.12
    sigma_u: float = 1.0
    sigma_v: float = 1.0
    sigma_t: float = 0.01
    sigma_r_deg: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_poses < 1 or self.n_landmarks < 1:
            raise ValueError("need n_poses >= 1 and n_landmarks >= 1")

    @property
    def sigma_r_rad(self) -> float:
        return math.radians(self.sigma_r_deg)


@dataclass
class MwInstance:
    config: MwConfig
    landmarks: np.ndarray  # (N_m, 3) world frame
    gt_rotations: np.ndarray  # (N, 3, 3) world-to-camera
    gt_translations: np.ndarray  # (N, 3) camera-frame translation part
    # per pose: (landmark index, measured point in camera frame, weight)
    landmark_meas: list[list[tuple[int, np.ndarray, np.ndarray]]]
    # per chain edge (i, i+1): (measured relative rotation, translation)
    relative_meas: list[tuple[np.ndarray, np.ndarray]]

    @property
    def n_poses(self) -> int:
        return len(self.gt_rotations)


def stereo_jacobian(p_cam: np.ndarray, config: MwConfig) -> np.ndarray:
    """Jacobian of [f x/z + c, f y/z + c, f b/z] at a camera-frame point."""
    x, y, z = p_cam
    if z <= 0:
        raise ValueError(f"point behind the camera, z={z}")
    f = config.focal
    return np.array(
        [
            [f / z, 0.0, -f * x / z**2],
            [0.0, f / z, -f * y / z**2],
            [0.0, 0.0, -f * config.baseline / z**2],
        ]
    )


def stereo_weight(p_cam: np.ndarray, config: MwConfig) -> np.ndarray:
    """Inverse covariance of the Euclidean measurement induced by pixel noise.

    Zero pixel sigmas (noiseless instances) fall back to unit-pixel weights so
    the weight matrix stays finite.
    """
    J = stereo_jacobian(p_cam, config)
    su = config.sigma_u if config.sigma_u > 0 else 1.0
    sv = config.sigma_v if config.sigma_v > 0 else 1.0
    inv_pix = np.diag([su**-2, sv**-2, su**-2])
    W = J.T @ inv_pix @ J
    return 0.5 * (W + W.T)


def simulate(config: MwConfig, rng: np.random.Generator | None = None) -> MwInstance:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    half = config.cube_side / 2.0
    landmarks = rng.uniform(-half, half, size=(config.n_landmarks, 3))
    box_min = np.asarray(config.pose_box_min)
    box_max = np.asarray(config.pose_box_max)

    rotations, translations = [], []
    for _ in range(config.n_poses):
        for _ in range(100):
            position = rng.uniform(box_min, box_max)
            yaw = rng.uniform(0.0, 2.0 * np.pi)
            C = rot_z(yaw) @ Z_DOWN
            t = -C @ position
            depths = (landmarks @ C.T + t)[:, 2]
            if np.all(depths > 0):
                break
        else:
            raise GenerationError("could not place a pose with all landmarks in view")
        rotations.append(C)
        translations.append(t)
    rotations = np.asarray(rotations)
    translations = np.asarray(translations)

    landmark_meas: list[list[tuple[int, np.ndarray, np.ndarray]]] = []
    for k in range(config.n_poses):
        node = []
        for l in range(config.n_landmarks):
            p_cam = rotations[k] @ landmarks[l] + translations[k]
            W = stereo_weight(p_cam, config)
            if config.sigma_u > 0 or config.sigma_v > 0:
                pix = rng.normal(
                    0.0, [config.sigma_u, config.sigma_v, config.sigma_u]
                )
                noise = np.linalg.solve(stereo_jacobian(p_cam, config), pix)
            else:
                noise = np.zeros(3)
            node.append((l, p_cam + noise, W))
        landmark_meas.append(node)

    relative_meas = []
    for i in range(config.n_poses - 1):
        Ci, ti = rotations[i], translations[i]
        Cj, tj = rotations[i + 1], translations[i + 1]
        C_rel = Ci @ Cj.T
        t_rel = ti - C_rel @ tj
        if config.sigma_r_deg > 0:
            C_rel = so3_exp(rng.normal(0.0, config.sigma_r_rad, size=3)) @ C_rel
        if config.sigma_t > 0:
            t_rel = t_rel + rng.normal(0.0, config.sigma_t, size=3)
        relative_meas.append((C_rel, t_rel))

    return MwInstance(
        config=config,
        landmarks=landmarks,
        gt_rotations=rotations,
        gt_translations=translations,
        landmark_meas=landmark_meas,
        relative_meas=relative_meas,
    )


def relative_weight(config: MwConfig) -> np.ndarray:
    """Block-isotropic weight over vec([C | t]) residual entries.

    Zero sigmas (noiseless instances) fall back to unit weights.
    """
    sr = config.sigma_r_rad if config.sigma_r_deg > 0 else 1.0
    st = config.sigma_t if config.sigma_t > 0 else 1.0
    w = np.concatenate([np.full(9, sr**-2), np.full(3, st**-2)])
    return np.diag(w)


def nls_cost(instance: MwInstance, rotations: np.ndarray, translations: np.ndarray) -> float:
    total = 0.0
    for k, node in enumerate(instance.landmark_meas):
        for l, m_meas, W in node:
            e = m_meas - (rotations[k] @ instance.landmarks[l] + translations[k])
            total += float(e @ W @ e)
    W_rel = relative_weight(instance.config)
    for i, (C_rel, t_rel) in enumerate(instance.relative_meas):
        Ti = np.hstack([rotations[i], translations[i][:, None]])
        pred = np.hstack(
            [C_rel @ rotations[i + 1], (C_rel @ translations[i + 1] + t_rel)[:, None]]
        )
        e = (Ti - pred).ravel(order="F")
        total += float(e @ W_rel @ e)
    return total


# Lifting ------------------------------------------------------------------

_LABELS = tuple(f"c{r}{c}" for c in range(3) for r in range(3)) + ("tx", "ty", "tz")


def _col_index(r: int, c: int) -> int:
    """Position of C[r, c] in the local vector [h, vec(C), t]."""
    return 1 + 3 * c + r


_T_OFFSET = 10  # translation coordinates start here


def _orthogonality_rows(kind_cols: bool) -> list[tuple[np.ndarray, float]]:
    """Quadratic forms for C'C = I (columns) or CC' = I (rows)."""
    rows = []
    for a in range(3):
        for b in range(a, 3):
            A = np.zeros((13, 13))
            for r in range(3):
                i = _col_index(r, a) if kind_cols else _col_index(a, r)
                j = _col_index(r, b) if kind_cols else _col_index(b, r)
                A[i, j] += 0.5
                A[j, i] += 0.5
            rows.append((A, 1.0 if a == b else 0.0))
    return rows


def _handedness_rows(a: int, b: int, c: int) -> list[tuple[np.ndarray, float]]:
    """col_a x col_b = col_c as three quadratic forms (using h for the linear part)."""
    rows = []
    for r in range(3):
        r1, r2 = (r + 1) % 3, (r + 2) % 3
        A = np.zeros((13, 13))
        i, j = _col_index(r1, a), _col_index(r2, b)
        A[i, j] += 0.5
        A[j, i] += 0.5
        i, j = _col_index(r2, a), _col_index(r1, b)
        A[i, j] -= 0.5
        A[j, i] -= 0.5
        k = _col_index(r, c)
        A[0, k] -= 0.5
        A[k, 0] -= 0.5
        rows.append((A, 0.0))
    return rows


def lift(
    instance: MwInstance,
    redundant: bool = True,
    drop_dependent_cct: bool = True,
) -> LiftedProblem:
    """Build the lifted problem with per-pose layout [h, vec(C), t].

    With ``redundant`` the row-orthogonality and extra handedness constraints
    are added; one row-orthogonality diagonal is dropped by default because it
    is linearly dependent on the column set.
    """
    n = instance.n_poses
    blocks = [VarBlock(index=k, state_dim=12, lift_dim=0, labels=_LABELS) for k in range(n)]

    cost_factors = []
    for k, node in enumerate(instance.landmark_meas):
        rows_B, rows_W = [], []
        for l, m_meas, W in node:
            m = instance.landmarks[l]
            B = np.zeros((3, 13))
            B[:, 0] = m_meas
            B[:, 1:10] = -np.kron(m[None, :], np.eye(3))
            B[:, _T_OFFSET:] = -np.eye(3)
            rows_B.append(B)
            rows_W.append(W)
        B_all = np.vstack(rows_B)
        W_all = np.zeros((3 * len(node), 3 * len(node)))
        for r, W in enumerate(rows_W):
            W_all[3 * r : 3 * r + 3, 3 * r : 3 * r + 3] = W
        cost_factors.append(
            CostFactor(
                scope=(k,), matrix=B_all.T @ W_all @ B_all, basis=B_all, weight=W_all
            )
        )

    relative_scopes = [(i, i + 1) for i in range(n - 1)]
    W_rel = relative_weight(instance.config)
    for i, (C_rel, t_rel) in enumerate(instance.relative_meas):
        B = np.zeros((12, 25))
        B[0:9, 1:10] = np.eye(9)
        B[9:12, 10:13] = np.eye(3)
        B[0:9, 13:22] = -np.kron(np.eye(3), C_rel)
        B[9:12, 22:25] = -C_rel
        B[9:12, 0] = -t_rel
        cost_factors.append(
            CostFactor(scope=(i, i + 1), matrix=B.T @ W_rel @ B, basis=B, weight=W_rel)
        )

    constraint_factors = []
    for k in range(n):
        for A, rhs in _orthogonality_rows(kind_cols=True):
            constraint_factors.append(
                ConstraintFactor(block=k, matrix=A, rhs=rhs, kind="primary")
            )
        for A, rhs in _handedness_rows(0, 1, 2):
            constraint_factors.append(
                ConstraintFactor(block=k, matrix=A, rhs=rhs, kind="primary")
            )
        if redundant:
            row_orth = _orthogonality_rows(kind_cols=False)
            if drop_dependent_cct:
                row_orth = row_orth[:-1]  # drop the (2,2) diagonal entry
            for A, rhs in row_orth:
                constraint_factors.append(
                    ConstraintFactor(block=k, matrix=A, rhs=rhs, kind="redundant")
                )
            for a, b, c in ((1, 2, 0), (2, 0, 1)):
                for A, rhs in _handedness_rows(a, b, c):
                    constraint_factors.append(
                        ConstraintFactor(block=k, matrix=A, rhs=rhs, kind="redundant")
                    )
        constraint_factors.append(homogenization_factor(k, 13))

    return LiftedProblem(
        blocks=blocks,
        cost_factors=cost_factors,
        constraint_factors=constraint_factors,
        relative_scopes=relative_scopes,
        kind="mw",
        lift_state=None,
        coordinate_scales=None,
    )


def state_to_raw(C: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Pose to the 12-dim raw block state [vec(C), t]."""
    return np.concatenate([C.ravel(order="F"), t])


def raw_to_state(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return xi[:9].reshape(3, 3, order="F"), xi[9:12]


# JSON round trip ----------------------------------------------------------


def to_json_dict(instance: MwInstance) -> dict:
    cfg = instance.config
    return {
        "problem": "mw",
        "config": {
            "n_poses": cfg.n_poses,
            "n_landmarks": cfg.n_landmarks,
            "cube_side": cfg.cube_side,
            "pose_box_min": list(cfg.pose_box_min),
            "pose_box_max": list(cfg.pose_box_max),
            "focal": cfg.focal,
            "principal": cfg.principal,
            "baseline": cfg.baseline,
            "sigma_u": cfg.sigma_u,
            "sigma_v": cfg.sigma_v,
            "sigma_t": cfg.sigma_t,
            "sigma_r_deg": cfg.sigma_r_deg,
            "seed": cfg.seed,
        },
        "landmarks": instance.landmarks.tolist(),
        "gt_rotations": instance.gt_rotations.tolist(),
        "gt_translations": instance.gt_translations.tolist(),
        "landmark_meas": [
            [[int(l), p.tolist(), W.tolist()] for l, p, W in node]
            for node in instance.landmark_meas
        ],
        "relative_meas": [[C.tolist(), t.tolist()] for C, t in instance.relative_meas],
    }


def from_json_dict(doc: dict) -> MwInstance:
    cfg_doc = dict(doc["config"])
    cfg_doc["pose_box_min"] = tuple(cfg_doc["pose_box_min"])
    cfg_doc["pose_box_max"] = tuple(cfg_doc["pose_box_max"])
    cfg = MwConfig(**cfg_doc)
    return MwInstance(
        config=cfg,
        landmarks=np.asarray(doc["landmarks"], dtype=float),
        gt_rotations=np.asarray(doc["gt_rotations"], dtype=float),
        gt_translations=np.asarray(doc["gt_translations"], dtype=float),
        landmark_meas=[
            [
                (int(l), np.asarray(p, dtype=float), np.asarray(W, dtype=float))
                for l, p, W in node
            ]
            for node in doc["landmark_meas"]
        ],
        relative_meas=[
            (np.asarray(C, dtype=float), np.asarray(t, dtype=float))
            for C, t in doc["relative_meas"]
        ],
    )


def save_json(instance: MwInstance, path: str) -> None:
    with open(path, "w") as f:
        json.dump(to_json_dict(instance), f)


def load_json(path: str) -> MwInstance:
    with open(path) as f:
        return from_json_dict(json.load(f))


def with_noise(config: MwConfig, sigma_pix: float) -> MwConfig:
    return replace(config, sigma_u=sigma_pix, sigma_v=sigma_pix)
