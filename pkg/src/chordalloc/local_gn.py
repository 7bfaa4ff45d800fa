"""Local Gauss-Newton solvers for both localization problems.

Plain Gauss-Newton with a Levenberg fallback engaged only when a step fails
to decrease the cost; damping=0 selects pure undamped steps. Pose states are
updated through the SE(3) exponential so iterates stay on the manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

from .ctro import CtroInstance
from .geometry import hat, se3_exp, so3_exp
from .mw import MwInstance, relative_weight


@dataclass(frozen=True)
class GnConfig:
    grad_tol: float = 1e-7  # max-norm of the cost gradient
    max_iterations: int = 100
    damping: float = 1e-4  # initial Levenberg factor when a step is rejected

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")


@dataclass
class GnResult:
    estimate: object
    cost: float
    grad_norm: float
    iterations: int
    converged: bool
    status: str = "ok"


class GnFailure(RuntimeError):
    pass


def _gn_loop(x0, residual_fn, retract_fn, config: GnConfig):
    """Shared damped Gauss-Newton iteration over a flattened parameter vector."""
    x = x0
    r, J = residual_fn(x)
    cost = float(r @ r)
    grad = 2.0 * (J.T @ r)
    it = 0
    for it in range(config.max_iterations):
        gnorm = float(np.abs(grad).max())
        if gnorm <= config.grad_tol:
            return x, cost, gnorm, it, True
        JtJ = J.T @ J
        Jtr = J.T @ r
        nu = 0.0
        accepted = False
        for _ in range(25):
            H = JtJ if nu == 0.0 else JtJ + nu * np.eye(JtJ.shape[0])
            try:
                step = -cho_solve(cho_factor(H), Jtr)
            except np.linalg.LinAlgError:
                if config.damping == 0.0:
                    raise GnFailure("singular normal equations in pure mode")
                nu = config.damping if nu == 0.0 else nu * 10.0
                continue
            x_new = retract_fn(x, step)
            r_new, J_new = residual_fn(x_new)
            cost_new = float(r_new @ r_new)
            if config.damping == 0.0 or cost_new <= cost:
                x, r, J, cost = x_new, r_new, J_new, cost_new
                accepted = True
                break
            nu = config.damping if nu == 0.0 else nu * 10.0
            if nu > 1e10:
                break
        if not accepted:
            # no decreasing step found; report the current stationary estimate
            grad = 2.0 * (J.T @ r)
            return x, cost, float(np.abs(grad).max()), it + 1, False
        grad = 2.0 * (J.T @ r)
    gnorm = float(np.abs(grad).max())
    return x, cost, gnorm, config.max_iterations, gnorm <= config.grad_tol


# CT-RO ----------------------------------------------------------------------


def ctro_residuals(instance: CtroInstance, states: np.ndarray):
    """Weighted residual stack and Jacobian at raw states (N, 6)."""
    states = np.asarray(states, dtype=float).reshape(instance.n_states, 6)
    n = instance.n_states
    sqrt_w = instance.config.sigma_d_prior**-1
    n_meas = sum(len(node) for node in instance.measurements)
    n_res = n_meas + 6 * (n - 1)
    r = np.zeros(n_res)
    J = np.zeros((n_res, 6 * n))
    row = 0
    for k, node in enumerate(instance.measurements):
        t = states[k, :3]
        for i, d2 in node:
            diff = t - instance.landmarks[i]
            r[row] = sqrt_w * (d2 - float(diff @ diff))
            J[row, 6 * k : 6 * k + 3] = -2.0 * sqrt_w * diff
            row += 1
    for k in range(n - 1):
        L = cholesky(instance.prior_weights[k], lower=True)
        e = states[k + 1] - instance.transitions[k] @ states[k]
        r[row : row + 6] = L.T @ e
        J[row : row + 6, 6 * k : 6 * k + 6] = -L.T @ instance.transitions[k]
        J[row : row + 6, 6 * (k + 1) : 6 * (k + 2)] = L.T
        row += 6
    return r, J


def gn_ctro(
    instance: CtroInstance, init: np.ndarray, config: GnConfig | None = None
) -> GnResult:
    config = config or GnConfig()
    x0 = np.asarray(init, dtype=float).reshape(-1).copy()
    if x0.shape != (6 * instance.n_states,):
        raise ValueError("init shape does not match the instance")

    def residual(x):
        return ctro_residuals(instance, x.reshape(-1, 6))

    def retract(x, step):
        return x + step

    try:
        x, cost, gnorm, iters, conv = _gn_loop(x0, residual, retract, config)
    except GnFailure as exc:
        return GnResult(
            estimate=x0.reshape(-1, 6), cost=float("nan"), grad_norm=float("nan"),
            iterations=0, converged=False, status=f"numerical-failure: {exc}",
        )
    return GnResult(
        estimate=x.reshape(-1, 6), cost=cost, grad_norm=gnorm,
        iterations=iters, converged=conv,
    )


# MW -------------------------------------------------------------------------


def mw_residuals(instance: MwInstance, rotations, translations):
    """Weighted residual stack and Jacobian wrt stacked (rho, phi) per pose."""
    n = instance.n_poses
    n_meas = 3 * sum(len(node) for node in instance.landmark_meas)
    n_rel = 12 * len(instance.relative_meas)
    r = np.zeros(n_meas + n_rel)
    J = np.zeros((n_meas + n_rel, 6 * n))
    row = 0
    for k, node in enumerate(instance.landmark_meas):
        C, t = rotations[k], translations[k]
        for l, m_meas, W in node:
            Lw = cholesky(W, lower=True)
            p = C @ instance.landmarks[l] + t
            e = m_meas - p
            r[row : row + 3] = Lw.T @ e
            J[row : row + 3, 6 * k : 6 * k + 3] = Lw.T @ (-np.eye(3))
            J[row : row + 3, 6 * k + 3 : 6 * k + 6] = Lw.T @ hat(p)
            row += 3
    W_rel = relative_weight(instance.config)
    sqrt_w = np.sqrt(np.diag(W_rel))
    for idx, (C_rel, t_rel) in enumerate(instance.relative_meas):
        i, j = idx, idx + 1
        Ci, ti = rotations[i], translations[i]
        Cj, tj = rotations[j], translations[j]
        pred = np.hstack([C_rel @ Cj, (C_rel @ tj + t_rel)[:, None]])
        e = (np.hstack([Ci, ti[:, None]]) - pred).ravel(order="F")
        r[row : row + 12] = sqrt_w * e
        Ji = np.zeros((12, 6))
        Jj = np.zeros((12, 6))
        for c in range(3):
            Ji[3 * c : 3 * c + 3, 3:6] = -hat(Ci[:, c])
            Jj[3 * c : 3 * c + 3, 3:6] = C_rel @ hat(Cj[:, c])
        Ji[9:12, 0:3] = np.eye(3)
        Ji[9:12, 3:6] = -hat(ti)
        Jj[9:12, 0:3] = -C_rel
        Jj[9:12, 3:6] = C_rel @ hat(tj)
        J[row : row + 12, 6 * i : 6 * i + 6] = sqrt_w[:, None] * Ji
        J[row : row + 12, 6 * j : 6 * j + 6] = sqrt_w[:, None] * Jj
        row += 12
    return r, J


def gn_mw(
    instance: MwInstance,
    init_rotations,
    init_translations,
    config: GnConfig | None = None,
) -> GnResult:
    config = config or GnConfig()
    state0 = (np.array(init_rotations, dtype=float), np.array(init_translations, dtype=float))
    for C in state0[0]:
        if np.abs(C.T @ C - np.eye(3)).max() > 1e-9 or np.linalg.det(C) < 0:
            raise ValueError("initial rotations must be proper rotation matrices")

    def residual(state):
        return mw_residuals(instance, state[0], state[1])

    def retract(state, step):
        rots, trans = state
        new_r = np.empty_like(rots)
        new_t = np.empty_like(trans)
        for k in range(len(rots)):
            Rd, pd = se3_exp(step[6 * k : 6 * k + 6])
            new_r[k] = Rd @ rots[k]
            new_t[k] = Rd @ trans[k] + pd
        return (new_r, new_t)

    try:
        state, cost, gnorm, iters, conv = _gn_loop(state0, residual, retract, config)
    except GnFailure as exc:
        return GnResult(
            estimate=state0, cost=float("nan"), grad_norm=float("nan"),
            iterations=0, converged=False, status=f"numerical-failure: {exc}",
        )
    return GnResult(
        estimate=state, cost=cost, grad_norm=gnorm, iterations=iters, converged=conv
    )


# Initialization ---------------------------------------------------------------


def random_init(instance, rng: np.random.Generator, std: float = 0.5):
    """Gaussian perturbation of the ground truth; rotations via the exp map."""
    if isinstance(instance, CtroInstance):
        return instance.gt_states + rng.normal(0.0, std, size=instance.gt_states.shape)
    if isinstance(instance, MwInstance):
        rots, trans = [], []
        for C, t in zip(instance.gt_rotations, instance.gt_translations):
            phi = rng.normal(0.0, std, size=3)
            rots.append(so3_exp(phi) @ C)
            trans.append(t + rng.normal(0.0, std, size=3))
        return np.array(rots), np.array(trans)
    raise TypeError(f"unsupported instance type {type(instance)!r}")


def ground_truth_init(instance):
    if isinstance(instance, CtroInstance):
        return instance.gt_states.copy()
    if isinstance(instance, MwInstance):
        return instance.gt_rotations.copy(), instance.gt_translations.copy()
    raise TypeError(f"unsupported instance type {type(instance)!r}")
