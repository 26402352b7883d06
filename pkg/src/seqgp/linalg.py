"""Cholesky-based linear algebra helpers.

All posterior computations in this package solve SPD systems through a
Cholesky factor instead of forming explicit inverses.  Near-singular
matrices are handled by a bounded jitter escalation on the diagonal.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericalError

# Escalation ladder for diagonal jitter, relative to the supplied scale.
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7)


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part 0.5*(A + A^T)."""
    return 0.5 * (a + a.T)


def chol_jitter(a: np.ndarray, scale: float | None = None) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a``, escalating jitter on failure.

    Tries ``a + j*scale*I`` for j in ``JITTER_LADDER`` (a bare attempt, then
    three retries growing tenfold from 1e-10 to 1e-7).  ``scale`` defaults to
    the mean diagonal magnitude.

    Returns
    -------
    (L, jitter) : the factor and the absolute jitter that was added.

    Raises
    ------
    NumericalError
        if the ladder is exhausted; carries a condition-number diagnostic.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    if scale is None:
        scale = float(np.mean(np.abs(np.diag(a)))) or 1.0
    n = a.shape[0]
    for j in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(a + j * scale * np.eye(n) if j else a)
            return L, j * scale
        except np.linalg.LinAlgError:
            continue
    cond = float(np.linalg.cond(symmetrize(a)))
    raise NumericalError(
        f"Cholesky failed after jitter escalation to {JITTER_LADDER[-1]:.0e}*scale "
        f"(scale={scale:.3e}, cond~{cond:.3e})",
        detail={"cond": cond, "scale": scale},
    )


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b given the lower Cholesky factor L of A."""
    y = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, y, lower=False, check_finite=False)


def chol_logdet(L: np.ndarray) -> float:
    """log det A from its lower Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def solve_psd(a: np.ndarray, b: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Solve the SPD system A x = b via jittered Cholesky."""
    L, _ = chol_jitter(a, scale)
    return chol_solve(L, b)


def gaussian_loglik(y: float, mean: float, var: float) -> float:
    """log N(y | mean, var) for scalar arguments."""
    if var <= 0.0:
        raise NumericalError(f"non-positive predictive variance {var!r}")
    r = y - mean
    return -0.5 * (np.log(2.0 * np.pi * var) + r * r / var)
