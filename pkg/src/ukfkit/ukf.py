"""Unscented Kalman filter built on 2*l_x + 1 symmetric sigma points.

Sigma points are the columns of [c, c + p_1 .. c + p_{l_x}, c - p_1 ..
c - p_{l_x}] where p_i is the i-th column of alpha * chol(l_x * P) and c
is the current posterior mean.  The combination weights are

    w[0] = (alpha^2 - 1) / alpha^2,    w[i] = 1 / (2 alpha^2 l_x),

which sum to one for any alpha > 0.  Covariances come from the weighted
outer products of the propagated deviations, plus the additive noise
terms; gain and updates then mirror the Kalman filter's covariance form.

alpha < 1 makes the center weight negative and the estimated covariances
can lose definiteness; that surfaces as NotPositiveDefinite with the step
index rather than being repaired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kf import KfStep, kf_gain, kf_update
from .numerics import FilterDiverged, spd_sqrt_factor, symmetrize
from .statespace import StateEstimate, SystemModel, measure_batch, step_dynamics_batch

Array = np.ndarray


@dataclass(frozen=True)
class UkfWeights:
    """Sigma-point combination weights for a given alpha and state dimension."""

    alpha: float
    l_x: int
    w: Array

    @property
    def w_diag(self) -> Array:
        return np.diag(self.w)


@dataclass(frozen=True)
class SigmaSet:
    """Sigma points, their dynamics images, and their measurement images."""

    points: Array  # l_x x (2 l_x + 1), column 0 is the center
    propagated: Array  # f applied column-wise
    outputs: Array  # g applied to the propagated columns
    weights: UkfWeights


def ukf_weights(alpha: float, l_x: int) -> UkfWeights:
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if l_x < 1:
        raise ValueError(f"state dimension must be at least 1, got {l_x}")
    w = np.full(2 * l_x + 1, 1.0 / (2.0 * alpha**2 * l_x))
    w[0] = (alpha**2 - 1.0) / alpha**2
    return UkfWeights(alpha=alpha, l_x=l_x, w=w)


def sigma_points(center: Array, scale: Array, alpha: float, where: str = "") -> Array:
    """Columns [c, c + p_i, c - p_i] with p_i from alpha * chol(l_x * scale)."""
    center = np.asarray(center, dtype=float)
    l_x = center.size
    p_sigma = alpha * spd_sqrt_factor(l_x * np.asarray(scale, dtype=float), where)
    c = center[:, None]
    return np.hstack([c, c + p_sigma, c - p_sigma])


def propagate_sigma(model: SystemModel, points: Array, u=None, k: int = 0) -> tuple[Array, Array]:
    """Push sigma points through f, then their images through g."""
    xprop = step_dynamics_batch(model, points, u, k)
    if not np.all(np.isfinite(xprop)):
        raise FilterDiverged(f"sigma points became non-finite at step {k + 1}")
    yprop = measure_batch(model, xprop, k + 1)
    if not np.all(np.isfinite(yprop)):
        raise FilterDiverged(f"sigma outputs became non-finite at step {k + 1}")
    return xprop, yprop


def deviations(m: Array, weights: UkfWeights) -> Array:
    """Subtract the weighted column mean M @ w from every column."""
    m = np.asarray(m, dtype=float)
    return m - (m @ weights.w)[:, None]


def ukf_covariances(
    xdev: Array, ydev: Array, weights: UkfWeights, q: Array, r: Array
) -> tuple[Array, Array, Array]:
    """Unscented estimates (P_prior, P_z, P_ez) from centered deviations."""
    wx = xdev * weights.w
    wy = ydev * weights.w
    p_prior = symmetrize(wx @ xdev.T + q)
    p_z = symmetrize(wy @ ydev.T + r)
    p_ez = wx @ ydev.T
    return p_prior, p_z, p_ez


def make_sigma_set(
    model: SystemModel,
    center: Array,
    scale: Array,
    weights: UkfWeights,
    u=None,
    k: int = 0,
    where: str = "",
) -> SigmaSet:
    pts = sigma_points(center, scale, weights.alpha, where)
    xprop, yprop = propagate_sigma(model, pts, u, k)
    return SigmaSet(points=pts, propagated=xprop, outputs=yprop, weights=weights)


def ukf_step(
    model: SystemModel, est: StateEstimate, u=None, y=None, alpha: float = 1.5
) -> tuple[StateEstimate, KfStep]:
    """One UKF predict/update cycle, consuming the measurement at step k+1."""
    k = est.step
    weights = ukf_weights(alpha, model.l_x)
    sig = make_sigma_set(model, est.mean, est.cov, weights, u, k, where=f"ukf step {k}")
    prior_mean = sig.propagated @ weights.w
    predicted_y = sig.outputs @ weights.w
    xdev = deviations(sig.propagated, weights)
    ydev = deviations(sig.outputs, weights)
    p_prior, p_z, p_ez = ukf_covariances(xdev, ydev, weights, model.Q(k), model.R(k + 1))
    gain = kf_gain(p_z, p_ez, where=f"ukf step {k + 1}")
    mean, cov = kf_update(prior_mean, p_prior, gain, p_ez, y, predicted_y, where=f"ukf step {k + 1}")
    record = KfStep(prior_mean, p_prior, gain, p_z, p_ez, mean, cov)
    return StateEstimate(mean, cov, k + 1), record
