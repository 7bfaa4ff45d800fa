"""Shared instance builders for the test suite."""

import numpy as np

from chordalloc import ctro


def degenerate_ctro_instance(seed=0, tilt=0.02, noise=0.05, z0=0.5):
    """Near-planar anchors with the trajectory close to their plane.

    The mirrored trajectory is an attractive local minimum for random
    initializations, with a cost well separated from the global one.
    """
    rng = np.random.default_rng(seed)
    times = np.array([0.0, 1.0, 2.0])
    states = np.zeros((3, 6))
    states[:, 0] = [0.0, 0.5, 1.0]
    states[:, 1] = [0.0, 0.1, 0.2]
    states[:, 2] = z0
    states[:, 3] = 0.5
    states[:, 4] = 0.1
    landmarks = np.array(
        [[2.0, 2.0, 0.0], [-2.0, 2.0, 0.0], [2.0, -2.0, 0.0], [-2.0, -2.0, 0.0]]
    )
    landmarks[:, 2] += tilt * rng.normal(size=4)
    cfg = ctro.CtroConfig(
        n_states=3, n_landmarks=4, sigma_d_meas=noise, sigma_d_prior=0.1, seed=seed
    )
    measurements = []
    for k in range(3):
        node = []
        for i in range(4):
            d2 = float(np.sum((states[k, :3] - landmarks[i]) ** 2))
            node.append((i, d2 + rng.normal(0.0, noise)))
        measurements.append(node)
    transitions, weights = [], []
    for k in range(2):
        Phi, W = ctro.gp_prior_terms(times[k], times[k + 1], cfg.sigma_a_prior)
        transitions.append(Phi)
        weights.append(W)
    return ctro.CtroInstance(
        config=cfg, landmarks=landmarks, times=times, gt_states=states,
        measurements=measurements, transitions=transitions, prior_weights=weights,
    )
