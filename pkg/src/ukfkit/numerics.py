"""Small dense SPD-matrix helpers shared by all filters.

Covariances are kept honest in two ways: every stored covariance passes
through :func:`symmetrize`, and positive definiteness is checked by
attempting a Cholesky factorization.  A factorization that fails gets one
retry with a trace-scaled diagonal jitter; anything worse raises
:class:`NotPositiveDefinite` instead of being silently repaired, because a
covariance that far gone usually means the filter has diverged.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


class NotPositiveDefinite(Exception):
    """A covariance matrix could not be factored, even after jitter."""


class FilterDiverged(Exception):
    """A filter produced non-finite states or outputs."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return (M + M^T) / 2."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def spd_sqrt_factor(m: np.ndarray, where: str = "") -> np.ndarray:
    """Lower-triangular factor S of an SPD matrix, with S @ S.T == M.

    One retry with eps*I added, eps = 1e-12 * trace(M) / n, covers matrices
    that are indefinite only through round-off.  `where` names the caller
    (typically a filter and step index) in the error message.
    """
    m = symmetrize(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        pass
    n = m.shape[0]
    jitter = 1e-12 * np.trace(m) / n
    try:
        return np.linalg.cholesky(m + jitter * np.eye(n))
    except np.linalg.LinAlgError:
        suffix = f" ({where})" if where else ""
        raise NotPositiveDefinite(
            f"matrix of dimension {n} is not positive definite{suffix}"
        ) from None


def solve_spd(m: np.ndarray, b: np.ndarray, where: str = "") -> np.ndarray:
    """Solve M @ X = B for SPD M via its Cholesky factor, never an inverse."""
    factor = spd_sqrt_factor(m, where)
    b = np.asarray(b, dtype=float)
    y = solve_triangular(factor, b, lower=True)
    return solve_triangular(factor.T, y, lower=False)


def rcond_check(m: np.ndarray, threshold: float = 1e-12) -> bool:
    """True iff the reciprocal 2-norm condition number of M is >= threshold."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return False
    return bool(s[-1] / s[0] >= threshold)
