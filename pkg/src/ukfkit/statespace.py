"""Discrete-time state-space models and the built-in benchmark systems.

A :class:`SystemModel` is the nonlinear form

    x_{k+1} = f(x_k, u_k) + w_k,      w_k ~ N(0, Q_k),
    y_k     = g(x_k)      + v_k,      v_k ~ N(0, R_k),

with optional analytic Jacobians of f and g (finite differences are the
fallback).  :class:`LinearSystem` is the special case f = A x + B u,
g = C x with exact Jacobians A and C.

Model callables accept a single state of shape (l_x,) and, for the
built-ins, also a column-stacked batch of shape (l_x, m); set
``vectorized=False`` for models that only handle single states and the
batch helpers fall back to a per-column loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .numerics import spd_sqrt_factor, symmetrize

Array = np.ndarray
MatrixLike = Union[Array, Callable[[int], Array]]


def _as_schedule(value, name: str):
    """Normalize a constant matrix or a function of the step index k."""
    if value is None:
        return None
    if callable(value):
        return value
    mat = np.asarray(value, dtype=float)
    if mat.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {mat.shape}")
    return lambda k: mat


def noise_cov(value, dim: int) -> Array:
    """Expand a noise covariance: scalar q -> q*I, vector -> diag, matrix as is."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.ndim == 1:
        if arr.size != dim:
            raise ValueError(f"diagonal of length {arr.size} for dimension {dim}")
        return np.diag(arr)
    if arr.shape != (dim, dim):
        raise ValueError(f"covariance shape {arr.shape} does not match dimension {dim}")
    return arr


def noise_factor(m: Array, where: str = "") -> Array:
    """Factor S with S @ S.T = M for a noise covariance; all-zero M is allowed."""
    m = np.asarray(m, dtype=float)
    if not m.any():
        return np.zeros_like(m)
    return spd_sqrt_factor(m, where)


@dataclass
class SystemModel:
    """Nonlinear discrete-time model with noise covariances and Jacobians.

    Q and R may be given as constant matrices or as functions of the step
    index; after construction they are always callables ``Q(k)``, ``R(k)``.
    """

    l_x: int
    l_y: int
    f: Callable[[Array, Optional[Array], int], Array]
    g: Callable[[Array, int], Array]
    Q: MatrixLike
    R: MatrixLike
    l_u: int = 0
    jac_f: Optional[Callable[[Array, Optional[Array], int], Array]] = None
    jac_g: Optional[Callable[[Array, int], Array]] = None
    fd_fallback: bool = True
    vectorized: bool = True
    name: str = ""

    def __post_init__(self):
        self.Q = _as_schedule(self.Q, "Q")
        self.R = _as_schedule(self.R, "R")


@dataclass
class LinearSystem:
    """Linear model x_{k+1} = A x + B u + w, y = C x + v.

    A, B, C, Q, R accept constant matrices or functions of k, normalized to
    callables on construction.  `to_model` produces the equivalent
    SystemModel with exact Jacobians.
    """

    A: MatrixLike
    C: MatrixLike
    Q: MatrixLike
    R: MatrixLike
    B: Optional[MatrixLike] = None
    name: str = ""
    l_x: int = field(init=False)
    l_y: int = field(init=False)
    l_u: int = field(init=False)

    def __post_init__(self):
        self.A = _as_schedule(self.A, "A")
        self.C = _as_schedule(self.C, "C")
        self.Q = _as_schedule(self.Q, "Q")
        self.R = _as_schedule(self.R, "R")
        self.B = _as_schedule(self.B, "B")
        a0, c0 = self.A(0), self.C(0)
        if a0.shape[0] != a0.shape[1]:
            raise ValueError(f"A must be square, got shape {a0.shape}")
        if c0.shape[1] != a0.shape[0]:
            raise ValueError(f"C shape {c0.shape} does not match state dimension {a0.shape[0]}")
        self.l_x = a0.shape[0]
        self.l_y = c0.shape[0]
        self.l_u = self.B(0).shape[1] if self.B is not None else 0

    def to_model(self) -> SystemModel:
        def f(x, u, k):
            out = self.A(k) @ x
            if self.B is not None and u is not None:
                bu = self.B(k) @ u
                out = out + (bu if out.ndim == 1 else bu[:, None])
            return out

        def g(x, k):
            return self.C(k) @ x

        return SystemModel(
            l_x=self.l_x,
            l_y=self.l_y,
            l_u=self.l_u,
            f=f,
            g=g,
            Q=self.Q,
            R=self.R,
            jac_f=lambda x, u, k: self.A(k),
            jac_g=lambda x, k: self.C(k),
            name=self.name,
        )


@dataclass(frozen=True)
class StateEstimate:
    """Posterior mean and covariance at a step: (x_hat_{k|k}, P_{k|k}, k)."""

    mean: Array
    cov: Array
    step: int = 0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = symmetrize(self.cov)
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if self.step < 0:
            raise ValueError(f"step must be nonnegative, got {self.step}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def _check_state(model: SystemModel, x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.l_x,):
        raise ValueError(f"state shape {x.shape}, expected ({model.l_x},)")
    return x


def _check_input(model: SystemModel, u) -> Optional[Array]:
    if model.l_u == 0:
        return None if u is None else np.asarray(u, dtype=float)
    if u is None:
        return np.zeros(model.l_u)
    u = np.asarray(u, dtype=float)
    if u.shape != (model.l_u,):
        raise ValueError(f"input shape {u.shape}, expected ({model.l_u},)")
    return u


def step_dynamics(model: SystemModel, x: Array, u=None, k: int = 0) -> Array:
    """Noise-free dynamics f_k(x, u)."""
    x = _check_state(model, x)
    u = _check_input(model, u)
    out = np.asarray(model.f(x, u, k), dtype=float)
    if out.shape != (model.l_x,):
        raise ValueError(f"f returned shape {out.shape}, expected ({model.l_x},)")
    return out


def measure(model: SystemModel, x: Array, k: int = 0) -> Array:
    """Noise-free measurement g_k(x)."""
    x = _check_state(model, x)
    out = np.asarray(model.g(x, k), dtype=float)
    if out.shape != (model.l_y,):
        raise ValueError(f"g returned shape {out.shape}, expected ({model.l_y},)")
    return out


def step_dynamics_batch(model: SystemModel, xs: Array, u=None, k: int = 0) -> Array:
    """f applied to column-stacked states, vectorized when the model allows."""
    xs = np.asarray(xs, dtype=float)
    u = _check_input(model, u)
    if model.vectorized:
        out = np.asarray(model.f(xs, u, k), dtype=float)
        if out.shape != xs.shape:
            raise ValueError(f"vectorized f returned shape {out.shape}, expected {xs.shape}")
        return out
    return np.column_stack([step_dynamics(model, xs[:, i], u, k) for i in range(xs.shape[1])])


def measure_batch(model: SystemModel, xs: Array, k: int = 0) -> Array:
    """g applied to column-stacked states, vectorized when the model allows."""
    xs = np.asarray(xs, dtype=float)
    if model.vectorized:
        out = np.asarray(model.g(xs, k), dtype=float)
        if out.shape != (model.l_y, xs.shape[1]):
            raise ValueError(
                f"vectorized g returned shape {out.shape}, expected {(model.l_y, xs.shape[1])}"
            )
        return out
    return np.column_stack([measure(model, xs[:, i], k) for i in range(xs.shape[1])])


def jacobian_fd(fn: Callable[[Array], Array], x: Array, h: Optional[float] = None) -> Array:
    """Central-difference Jacobian; column j is (fn(x+h e_j) - fn(x-h e_j)) / 2h."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-6 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        hi = np.asarray(fn(x + e), dtype=float)
        lo = np.asarray(fn(x - e), dtype=float)
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise FloatingPointError(f"non-finite function value while differencing column {j}")
        cols.append((hi - lo) / (2.0 * h))
    return np.column_stack(cols)


def jacobian_dynamics(model: SystemModel, x: Array, u=None, k: int = 0) -> Array:
    """d f / d x at (x, u, k): analytic when attached, central differences otherwise."""
    x = _check_state(model, x)
    u = _check_input(model, u)
    if model.jac_f is not None:
        jac = np.asarray(model.jac_f(x, u, k), dtype=float)
    elif model.fd_fallback:
        jac = jacobian_fd(lambda z: model.f(z, u, k), x)
    else:
        raise ValueError("model has no dynamics Jacobian and finite differences are disabled")
    if jac.shape != (model.l_x, model.l_x):
        raise ValueError(f"dynamics Jacobian shape {jac.shape}, expected ({model.l_x}, {model.l_x})")
    return jac


def jacobian_measurement(model: SystemModel, x: Array, k: int = 0) -> Array:
    """d g / d x at (x, k): analytic when attached, central differences otherwise."""
    x = _check_state(model, x)
    if model.jac_g is not None:
        jac = np.asarray(model.jac_g(x, k), dtype=float)
    elif model.fd_fallback:
        jac = jacobian_fd(lambda z: model.g(z, k), x)
    else:
        raise ValueError("model has no measurement Jacobian and finite differences are disabled")
    if jac.shape != (model.l_y, model.l_x):
        raise ValueError(f"measurement Jacobian shape {jac.shape}, expected ({model.l_y}, {model.l_x})")
    return jac


def make_vdp(ts: float = 0.01, mu: float = 1.0, q=0.01, r=1e-4) -> SystemModel:
    """Euler-discretized Van der Pol oscillator observed in its first coordinate.

    f(x) = [x1 + ts*x2, x2 + ts*(mu*(1 - x1^2)*x2 - x1)], C = [1 0],
    with Q = 0.01*I and R = 1e-4 by default.
    """
    if ts <= 0:
        raise ValueError(f"step size must be positive, got {ts}")
    c = np.array([[1.0, 0.0]])

    def f(x, u, k):
        x1, x2 = x
        return np.array([x1 + ts * x2, x2 + ts * (mu * (1.0 - x1**2) * x2 - x1)])

    def jac(x, u, k):
        x1, x2 = x
        return np.array(
            [
                [1.0, ts],
                [ts * (-2.0 * mu * x1 * x2 - 1.0), 1.0 + ts * mu * (1.0 - x1**2)],
            ]
        )

    return SystemModel(
        l_x=2,
        l_y=1,
        f=f,
        g=lambda x, k: c @ x,
        Q=noise_cov(q, 2),
        R=noise_cov(r, 1),
        jac_f=jac,
        jac_g=lambda x, k: c,
        name="vdp",
    )


def make_lorenz(
    ts: float = 0.01,
    sigma: float = 10.0,
    rho: float = 28.0,
    beta: float = 8.0 / 3.0,
    q=0.01,
    r=1e-4,
) -> SystemModel:
    """Forward-Euler Lorenz-63 model observed in its second coordinate.

    f(x) = x + ts * [sigma*(x2-x1), x1*(rho-x3)-x2, x1*x2 - beta*x3],
    C = [0 1 0], Q = 0.01*I, R = 1e-4 by default.  The default parameters
    put the system in its chaotic regime.
    """
    if ts <= 0:
        raise ValueError(f"step size must be positive, got {ts}")
    c = np.array([[0.0, 1.0, 0.0]])

    def f(x, u, k):
        x1, x2, x3 = x
        return np.array(
            [
                x1 + ts * sigma * (x2 - x1),
                x2 + ts * (x1 * (rho - x3) - x2),
                x3 + ts * (x1 * x2 - beta * x3),
            ]
        )

    def jac(x, u, k):
        x1, x2, x3 = x
        return np.eye(3) + ts * np.array(
            [
                [-sigma, sigma, 0.0],
                [rho - x3, -1.0, -x1],
                [x2, x1, -beta],
            ]
        )

    return SystemModel(
        l_x=3,
        l_y=1,
        f=f,
        g=lambda x, k: c @ x,
        Q=noise_cov(q, 3),
        R=noise_cov(r, 1),
        jac_f=jac,
        jac_g=lambda x, k: c,
        name="lorenz",
    )


def make_linear_ex1(q=1.0, r=1.0) -> LinearSystem:
    """First benchmark linear system: unstable A, scalar output."""
    return LinearSystem(
        A=np.array([[2.4, 2.1], [0.0, -0.7]]),
        C=np.array([[-0.4, -0.9]]),
        Q=noise_cov(q, 2),
        R=noise_cov(r, 1),
        name="linear-ex1",
    )


def make_linear_ex2(q=0.1, r=0.1) -> LinearSystem:
    """Second benchmark linear system: eigenvalues on the unit circle, detectable."""
    return LinearSystem(
        A=np.array([[1.6, -1.0], [1.0, 0.0]]),
        C=np.array([[1.0, -0.3]]),
        Q=noise_cov(q, 2),
        R=noise_cov(r, 1),
        name="linear-ex2",
    )
