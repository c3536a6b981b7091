"""Classical Kalman filter for linear systems, in covariance form.

Prediction:   x+ = A x + B u,            P+ = A P A^T + Q
Innovation:   P_z = C P+ C^T + R,        P_ez = P+ C^T
Gain:         K = P_ez P_z^{-1}
Update:       x = x+ + K (y - C x+),     P = P+ - K P_ez^T

The update covariance is the short (optimal-gain) form; the cost of an
arbitrary gain K under the true innovation statistics is

    P(K) = P+ + K P_z K^T - K P_ez^T - P_ez K^T,

computed by :func:`evaluate_gain_cov`, whose trace the Kalman gain
minimizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import solve_spd, spd_sqrt_factor, symmetrize
from .statespace import LinearSystem, StateEstimate

Array = np.ndarray


@dataclass(frozen=True)
class KfStep:
    """All per-step filter quantities, shared by every filter in the package."""

    prior_mean: Array
    prior_cov: Array
    gain: Array
    innovation_cov: Array  # P_z, l_y x l_y
    cross_cov: Array  # P_ez, l_x x l_y
    posterior_mean: Array
    posterior_cov: Array


def kf_predict(sys: LinearSystem, est: StateEstimate, u=None) -> tuple[Array, Array]:
    """Propagate mean and covariance one step: (A x + B u, A P A^T + Q)."""
    k = est.step
    a = sys.A(k)
    if est.mean.size != sys.l_x:
        raise ValueError(f"estimate dimension {est.mean.size}, system expects {sys.l_x}")
    mean = a @ est.mean
    if sys.B is not None and u is not None:
        mean = mean + sys.B(k) @ np.asarray(u, dtype=float)
    cov = symmetrize(a @ est.cov @ a.T + sys.Q(k))
    return mean, cov


def kf_innovation(sys: LinearSystem, prior_cov: Array, k: int) -> tuple[Array, Array]:
    """Innovation covariance and state-output cross-covariance at measurement step k."""
    c = sys.C(k)
    p_z = symmetrize(c @ prior_cov @ c.T + sys.R(k))
    p_ez = prior_cov @ c.T
    return p_z, p_ez


def kf_gain(p_z: Array, p_ez: Array, where: str = "") -> Array:
    """Gain K solving K P_z = P_ez."""
    return solve_spd(p_z, p_ez.T, where).T


def kf_update(
    prior_mean: Array,
    prior_cov: Array,
    gain: Array,
    cross_cov: Array,
    y: Array,
    predicted_y: Array,
    where: str = "",
) -> tuple[Array, Array]:
    """Measurement update: mean += K (y - y_hat), cov = P+ - K P_ez^T."""
    y = np.asarray(y, dtype=float)
    mean = prior_mean + gain @ (y - predicted_y)
    cov = symmetrize(prior_cov - gain @ cross_cov.T)
    spd_sqrt_factor(cov, where)  # surface SPD loss here, with context
    return mean, cov


def evaluate_gain_cov(prior_cov: Array, p_z: Array, p_ez: Array, gain: Array) -> Array:
    """Posterior covariance achieved by an arbitrary gain under true statistics."""
    cross = gain @ p_ez.T
    return symmetrize(prior_cov + gain @ p_z @ gain.T - cross - cross.T)


def kf_step(sys: LinearSystem, est: StateEstimate, u=None, y=None) -> tuple[StateEstimate, KfStep]:
    """One full predict/update cycle, consuming the measurement at step k+1."""
    k = est.step
    prior_mean, prior_cov = kf_predict(sys, est, u)
    p_z, p_ez = kf_innovation(sys, prior_cov, k + 1)
    gain = kf_gain(p_z, p_ez, where=f"kf step {k + 1}")
    predicted_y = sys.C(k + 1) @ prior_mean
    mean, cov = kf_update(prior_mean, prior_cov, gain, p_ez, y, predicted_y, where=f"kf step {k + 1}")
    record = KfStep(prior_mean, prior_cov, gain, p_z, p_ez, mean, cov)
    return StateEstimate(mean, cov, k + 1), record
