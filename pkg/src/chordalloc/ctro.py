"""Continuous-time range-only localization with a constant-velocity motion prior.

Each node carries position and velocity in R^3 sampled at irregular times.
Squared-distance measurements to known landmarks plus a Gaussian-process
smoothness prior between consecutive nodes define the estimation cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    ConstraintFactor,
    CostFactor,
    LiftedProblem,
    VarBlock,
    homogenization_factor,
)


class GenerationError(RuntimeError):
    """Instance generation could not satisfy its containment constraints."""


@dataclass(frozen=True)
class CtroConfig:
    n_states: int = 10
    n_landmarks: int = 8
    cube_side: float = 10.0
    init_speed: float = 0.1
    sigma_a_true: float = 0.2
    sigma_d_meas: float = 0.10  # noise STD on squared distances
    sigma_d_prior: float = 1e-3  # assumed measurement STD used for weights
    sigma_a_prior: float = 0.2
    seed: int = 0
    meas_dropout: float = 0.0
    containment: str = "auto"  # "reject", "reflect" or "auto"
    max_containment_retries: int = 100

    def __post_init__(self):
        if self.n_states < 2 or self.n_landmarks < 1:
            raise ValueError("need n_states >= 2 and n_landmarks >= 1")
        if min(self.sigma_d_prior, self.sigma_a_prior) <= 0:
            raise ValueError("prior standard deviations must be positive")
        if min(self.sigma_d_meas, self.sigma_a_true) < 0:
            raise ValueError("noise standard deviations must be nonnegative")
        if self.containment not in ("reject", "reflect", "auto"):
            raise ValueError(f"unknown containment mode {self.containment!r}")


@dataclass
class CtroInstance:
    config: CtroConfig
    landmarks: np.ndarray  # (N_m, 3)
    times: np.ndarray  # (N,), sorted
    gt_states: np.ndarray  # (N, 6) rows [t, v]
    measurements: list[list[tuple[int, float]]]  # per node: (landmark, d~^2)
    transitions: list[np.ndarray] = field(default_factory=list)  # (6,6) per edge
    prior_weights: list[np.ndarray] = field(default_factory=list)  # (6,6) per edge

    @property
    def n_states(self) -> int:
        return len(self.times)


def gp_prior_terms(t_i: float, t_j: float, sigma_a: float) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and prior weight for one constant-velocity edge.

    Phi maps (t, v) at time t_i to the predicted state at time t_j > t_i; the
    weight is the closed-form inverse of the process-noise covariance
    Q = [[dt^3/3, dt^2/2], [dt^2/2, dt]] (x) sigma_a^2 I_3.
    """
    dt = float(t_j - t_i)
    if dt <= 0:
        raise ValueError(f"need t_j > t_i, got dt={dt}")
    I3 = np.eye(3)
    Phi = np.block([[I3, dt * I3], [np.zeros((3, 3)), I3]])
    qc = sigma_a**2
    W = np.block(
        [
            [12.0 / (dt**3 * qc) * I3, -6.0 / (dt**2 * qc) * I3],
            [-6.0 / (dt**2 * qc) * I3, 4.0 / (dt * qc) * I3],
        ]
    )
    return Phi, W


def process_noise_cov(dt: float, sigma_a: float) -> np.ndarray:
    I3 = np.eye(3)
    qc = sigma_a**2
    return np.block(
        [
            [dt**3 / 3.0 * qc * I3, dt**2 / 2.0 * qc * I3],
            [dt**2 / 2.0 * qc * I3, dt * qc * I3],
        ]
    )


def _rollout(times, x0, sigma_a, rng):
    states = [x0]
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        Phi = np.block(
            [[np.eye(3), dt * np.eye(3)], [np.zeros((3, 3)), np.eye(3)]]
        )
        if sigma_a > 0:
            w = rng.multivariate_normal(np.zeros(6), process_noise_cov(dt, sigma_a))
        else:
            w = np.zeros(6)
        states.append(Phi @ states[-1] + w)
    return np.asarray(states)


def _reflect_into_cube(states: np.ndarray, half: float) -> np.ndarray:
    """Fold positions back into [-half, half], flipping crossing velocities."""
    out = states.copy()
    for k in range(len(out)):
        for a in range(3):
            p = out[k, a] + half
            period = 4.0 * half
            p = p % period
            if p > 2.0 * half:
                p = period - p
                out[k, a + 3] = -out[k, a + 3]
            out[k, a] = p - half
    return out


def simulate(config: CtroConfig, rng: np.random.Generator | None = None) -> CtroInstance:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    half = config.cube_side / 2.0  # cube centered at the origin
    landmarks = rng.uniform(-half, half, size=(config.n_landmarks, 3))
    times = np.sort(rng.uniform(0.0, config.n_states - 1.0, size=config.n_states))

    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    v0 = config.init_speed * direction

    states = None
    if config.containment in ("reject", "auto"):
        for _ in range(config.max_containment_retries):
            p0 = rng.uniform(-half, half, size=3)
            candidate = _rollout(times, np.concatenate([p0, v0]), config.sigma_a_true, rng)
            if np.all(np.abs(candidate[:, :3]) <= half):
                states = candidate
                break
        if states is None and config.containment == "reject":
            raise GenerationError(
                f"trajectory left the cube in all {config.max_containment_retries} attempts"
            )
    if states is None:
        # Reflected rollout always stays inside; the prior is then slightly
        # misspecified at wall crossings, which only matters for large N.
        p0 = rng.uniform(-half, half, size=3)
        states = _reflect_into_cube(
            _rollout(times, np.concatenate([p0, v0]), config.sigma_a_true, rng), half
        )

    measurements: list[list[tuple[int, float]]] = []
    for k in range(config.n_states):
        node_meas = []
        for i in range(config.n_landmarks):
            if config.meas_dropout > 0.0 and rng.uniform() < config.meas_dropout:
                continue
            d2 = float(np.sum((states[k, :3] - landmarks[i]) ** 2))
            noise = rng.normal(0.0, config.sigma_d_meas) if config.sigma_d_meas > 0 else 0.0
            node_meas.append((i, d2 + noise))
        measurements.append(node_meas)

    transitions, prior_weights = [], []
    for k in range(config.n_states - 1):
        Phi, W = gp_prior_terms(times[k], times[k + 1], config.sigma_a_prior)
        transitions.append(Phi)
        prior_weights.append(W)

    return CtroInstance(
        config=config,
        landmarks=landmarks,
        times=times,
        gt_states=states,
        measurements=measurements,
        transitions=transitions,
        prior_weights=prior_weights,
    )


def nls_cost(instance: CtroInstance, states: np.ndarray) -> float:
    """Direct evaluation of the weighted least-squares cost at raw states."""
    states = np.asarray(states, dtype=float).reshape(instance.n_states, 6)
    w_meas = instance.config.sigma_d_prior ** -2
    total = 0.0
    for k, node_meas in enumerate(instance.measurements):
        for i, d2 in node_meas:
            e = d2 - float(np.sum((states[k, :3] - instance.landmarks[i]) ** 2))
            total += w_meas * e * e
    for k in range(instance.n_states - 1):
        e = states[k + 1] - instance.transitions[k] @ states[k]
        total += float(e @ instance.prior_weights[k] @ e)
    return total


# Lifting ------------------------------------------------------------------

_LABELS = ("tx", "ty", "tz", "vx", "vy", "vz", "t_sq")


def _lift_rule(xi: np.ndarray) -> np.ndarray:
    return np.array([float(xi[:3] @ xi[:3])])


def lift(instance: CtroInstance) -> LiftedProblem:
    """Build the lifted quadratic problem with per-node layout [h, t, v, |t|^2]."""
    n = instance.n_states
    blocks = [VarBlock(index=k, state_dim=6, lift_dim=1, labels=_LABELS) for k in range(n)]
    w_meas = instance.config.sigma_d_prior ** -2

    cost_factors = []
    for k, node_meas in enumerate(instance.measurements):
        if not node_meas:
            continue
        B = np.zeros((len(node_meas), 8))
        for r, (i, d2) in enumerate(node_meas):
            m = instance.landmarks[i]
            B[r, 0] = d2 - float(m @ m)
            B[r, 1:4] = 2.0 * m
            B[r, 7] = -1.0
        Bw = np.sqrt(w_meas) * B
        cost_factors.append(
            CostFactor(scope=(k,), matrix=Bw.T @ Bw, basis=Bw)
        )

    relative_scopes = [(k, k + 1) for k in range(n - 1)]
    for k in range(n - 1):
        # residual xi_{k+1} - Phi xi_k over the pair vector [h, xi_k, l_k, xi_j, l_j]
        B = np.zeros((6, 15))
        B[:, 1:7] = -instance.transitions[k]
        B[:, 8:14] = np.eye(6)
        W = instance.prior_weights[k]
        cost_factors.append(
            CostFactor(scope=(k, k + 1), matrix=B.T @ W @ B, basis=B, weight=W)
        )

    constraint_factors = []
    for k in range(n):
        # substitution: l_k - |t_k|^2 = 0, written h*l - t't = 0
        A = np.zeros((8, 8))
        A[0, 7] = A[7, 0] = 0.5
        A[1, 1] = A[2, 2] = A[3, 3] = -1.0
        constraint_factors.append(
            ConstraintFactor(block=k, matrix=A, rhs=0.0, kind="substitution")
        )
        constraint_factors.append(homogenization_factor(k, 8))

    half = instance.config.cube_side / 2.0
    node_scales = np.concatenate([np.full(3, half), np.ones(3), [half**2]])
    scales = np.concatenate([[1.0], np.tile(node_scales, n)])

    return LiftedProblem(
        blocks=blocks,
        cost_factors=cost_factors,
        constraint_factors=constraint_factors,
        relative_scopes=relative_scopes,
        kind="ctro",
        lift_state=_lift_rule,
        coordinate_scales=scales,
    )


# JSON round trip ----------------------------------------------------------


def to_json_dict(instance: CtroInstance) -> dict:
    cfg = instance.config
    return {
        "problem": "ctro",
        "config": {
            "n_states": cfg.n_states,
            "n_landmarks": cfg.n_landmarks,
            "cube_side": cfg.cube_side,
            "init_speed": cfg.init_speed,
            "sigma_a_true": cfg.sigma_a_true,
            "sigma_d_meas": cfg.sigma_d_meas,
            "sigma_d_prior": cfg.sigma_d_prior,
            "sigma_a_prior": cfg.sigma_a_prior,
            "seed": cfg.seed,
            "meas_dropout": cfg.meas_dropout,
        },
        "landmarks": instance.landmarks.tolist(),
        "times": instance.times.tolist(),
        "gt_states": instance.gt_states.tolist(),
        "measurements": [
            [[int(i), float(v)] for i, v in node] for node in instance.measurements
        ],
    }


def from_json_dict(doc: dict) -> CtroInstance:
    cfg = CtroConfig(**doc["config"])
    times = np.asarray(doc["times"], dtype=float)
    transitions, prior_weights = [], []
    for k in range(len(times) - 1):
        Phi, W = gp_prior_terms(times[k], times[k + 1], cfg.sigma_a_prior)
        transitions.append(Phi)
        prior_weights.append(W)
    return CtroInstance(
        config=cfg,
        landmarks=np.asarray(doc["landmarks"], dtype=float),
        times=times,
        gt_states=np.asarray(doc["gt_states"], dtype=float),
        measurements=[[(int(i), float(v)) for i, v in node] for node in doc["measurements"]],
        transitions=transitions,
        prior_weights=prior_weights,
    )


def save_json(instance: CtroInstance, path: str) -> None:
    with open(path, "w") as f:
        json.dump(to_json_dict(instance), f)


def load_json(path: str) -> CtroInstance:
    with open(path) as f:
        return from_json_dict(json.load(f))


def with_noise(config: CtroConfig, sigma_d: float) -> CtroConfig:
    return replace(config, sigma_d_meas=sigma_d)
