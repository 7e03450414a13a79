"""Discounted correlation matrix of stacked measurement triples.

The m x m matrix accumulates rank-one outer products of (x_{t+1}, x_t, u_t)
vectors with exponential discounting. Its top n rows (the Y block) always
hold measured data; the bottom n + n_u rows (the Z block) may be overwritten
with estimates, after which the matrix is no longer symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError
from .sim import TrajectorySample, measurement_vector

__all__ = [
    "CorrelationState",
    "initial_correlation",
    "build_gamma",
    "discount_update",
    "replace_z_block",
]


@dataclass
class CorrelationState:
    """Running discounted correlation with its Y/Z row partition.

    Owned by a single estimator instance; updates mutate C in place.
    """

    C: np.ndarray
    beta: float
    n: int
    n_u: int

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        m = self.m
        if self.C.shape != (m, m):
            raise DimensionMismatchError(f"C has shape {self.C.shape}, expected ({m}, {m})")
        # The discount algebra tolerates the endpoints; estimator configs
        # restrict to the open interval.
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    @property
    def m(self) -> int:
        return 2 * self.n + self.n_u

    def y_block(self) -> np.ndarray:
        return self.C[: self.n]

    def z_block(self) -> np.ndarray:
        return self.C[self.n :]


def initial_correlation(n: int, n_u: int, beta: float, scale: float = 1.0) -> CorrelationState:
    """Fresh state with C set to scale * I."""
    m = 2 * n + n_u
    return CorrelationState(C=scale * np.eye(m), beta=beta, n=n, n_u=n_u)


def build_gamma(sample: TrajectorySample, use_noisy: bool = True) -> np.ndarray:
    """Rank-one sample matrix v v' for the stacked measurement v."""
    v = measurement_vector(sample, noisy=use_noisy)
    return np.outer(v, v)


def discount_update(state: CorrelationState, gamma: np.ndarray) -> CorrelationState:
    """C <- beta * C + gamma, in place."""
    if gamma.shape != state.C.shape:
        raise DimensionMismatchError(
            f"gamma has shape {gamma.shape}, expected {state.C.shape}"
        )
    np.multiply(state.C, state.beta, out=state.C)
    state.C += gamma
    return state


def replace_z_block(state: CorrelationState, Z_hat: np.ndarray) -> CorrelationState:
    """Overwrite the bottom n + n_u rows with Z_hat; the Y block is untouched."""
    Z_hat = np.asarray(Z_hat, dtype=float)
    m = state.m
    if Z_hat.shape != (state.n + state.n_u, m):
        raise DimensionMismatchError(
            f"Z_hat has shape {Z_hat.shape}, expected ({state.n + state.n_u}, {m})"
        )
    state.C[state.n :] = Z_hat
    return state
