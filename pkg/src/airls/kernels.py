"""Small dense weighted least-squares kernels.

Weight matrices are diagonal throughout and are passed around as 1-D arrays
holding the diagonal; the full matrix is never materialized. Everything here
is a pure function and safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError, SingularNormalMatrixError

__all__ = ["COND_LIMIT", "weighted_pseudo_inverse", "solve_weighted_ls", "make_projector"]

# Above this condition number of X'WX the data is treated as degenerate.
COND_LIMIT = 1e12


def _weighted_normal(X, w):
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatchError(f"X must be 2-D, got shape {X.shape}")
    if w.shape != (X.shape[0],):
        raise DimensionMismatchError(
            f"weight diagonal has length {w.shape}, expected ({X.shape[0]},)"
        )
    Xw = X * w[:, None]
    return X.T @ Xw, Xw


def _check_conditioning(A):
    # A is symmetric PSD by construction, so eigvalsh is the cheap route.
    evals = np.linalg.eigvalsh(A)
    lo, hi = evals[0], evals[-1]
    if hi <= 0.0 or lo <= hi / COND_LIMIT:
        cond = np.inf if lo <= 0.0 else hi / lo
        raise SingularNormalMatrixError(
            f"normal matrix is numerically singular (cond={cond:.3e})"
        )


def weighted_pseudo_inverse(X, w):
    """Return (X'WX)^-1 X'W for the diagonal weight matrix W = diag(w).

    Satisfies X @ M @ X == X for the returned M whenever X has full column
    rank under the weighting. Raises SingularNormalMatrixError when X'WX has
    condition number above COND_LIMIT.
    """
    A, Xw = _weighted_normal(X, w)
    _check_conditioning(A)
    return np.linalg.solve(A, Xw.T)


def solve_weighted_ls(X, b, w):
    """Solve argmin_z ||X z - b||^2_W for diagonal W = diag(w).

    Equivalent to weighted_pseudo_inverse(X, w) @ b but with a single solve.
    """
    A, Xw = _weighted_normal(X, w)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != X.shape[0]:
        raise DimensionMismatchError(
            f"rhs has {b.shape[0]} rows, expected {np.asarray(X).shape[0]}"
        )
    _check_conditioning(A)
    return np.linalg.solve(A, Xw.T @ b)


def make_projector(theta_hat, w):
    """Build the oblique projector onto the null space of [-I, theta_hat].

    For c in R^m, P @ c minimizes ||d - c||^2_W subject to
    [-I, theta_hat] d = 0, with W = diag(w). Minimizing in the W-norm leads
    to the pseudo-inverse of [-I, theta_hat]' taken under the *inverse*
    weights. P is idempotent and [-I, theta_hat] @ P == 0.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    n, q = theta_hat.shape
    m = n + q
    if w.shape != (m,):
        raise DimensionMismatchError(f"weight diagonal has shape {w.shape}, expected ({m},)")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    G = np.hstack((-np.eye(n), theta_hat))
    # G W^-1 G' >= w_inv_min (I + theta theta') > 0, so this cannot be singular.
    pinv_t = weighted_pseudo_inverse(G.T, 1.0 / w).T
    return np.eye(m) - pinv_t @ G
