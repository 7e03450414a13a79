"""Baseline estimators sharing the AIRLS step/theta/point_estimate interface.

RTLS tracks the n smallest eigenvectors of the measured discounted
correlation by inverse power iterations and reads the parameters off that
null-space basis. RLS is plain exponentially weighted least squares of the
measured next state on the measured state/input regressor, which is biased
when the regressor itself is noisy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import PointEstimate, point_estimate
from .sim import TrajectorySample, measurement_vector

__all__ = [
    "RtlsConfig",
    "RtlsState",
    "init_rtls",
    "rtls_step",
    "extract_parameters",
    "RtlsEstimator",
    "RlsConfig",
    "RlsState",
    "init_rls",
    "rls_step",
    "RlsEstimator",
]


@dataclass(frozen=True)
class RtlsConfig:
    beta: float = 0.995
    power_iters: int = 2
    jitter: float = 1e-10
    alpha: float = 1e-8  # only used by the shared point-estimate projection
    c0_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.power_iters < 1:
            raise ValueError("power_iters must be at least 1")


@dataclass
class RtlsState:
    C_tilde: np.ndarray
    nullspace_basis: np.ndarray
    beta: float
    theta_hat: np.ndarray
    identified: bool = False
    step: int = 0


def init_rtls(n: int, n_u: int, config: RtlsConfig) -> RtlsState:
    m = 2 * n + n_u
    return RtlsState(
        C_tilde=config.c0_scale * np.eye(m),
        nullspace_basis=np.eye(m)[:, :n].copy(),
        beta=config.beta,
        theta_hat=np.zeros((n, n + n_u)),
    )


def _orthonormalize(Y: np.ndarray) -> np.ndarray:
    """Gram-Schmidt; cheap for the handful of columns tracked here."""
    Q = np.array(Y, dtype=float)
    for j in range(Q.shape[1]):
        qj = Q[:, j]
        if j:
            qj -= Q[:, :j] @ (Q[:, :j].T @ qj)
        nrm = np.sqrt(qj @ qj)
        if nrm < 1e-300:
            # Degenerate column: restart it on a canonical direction.
            qj[:] = 0.0
            qj[j % Q.shape[0]] = 1.0
            nrm = 1.0
        qj /= nrm
    return Q


def extract_parameters(basis: np.ndarray, n: int) -> tuple[np.ndarray | None, bool]:
    """Read [A, B] off a null-space basis.

    A basis column (y, z) of the model's orthogonal complement satisfies
    z = -theta' y, so theta solves the linear relation between the basis's
    top n rows and its bottom rows. When the top block is (numerically)
    singular the parameters are not identified and None is returned.
    """
    Vy = basis[:n, :]
    Vz = basis[n:, :]
    # The basis has orthonormal columns, so singular values of Vy are <= 1.
    if n == 2:
        M = Vy @ Vy.T
        tr = M[0, 0] + M[1, 1]
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        disc = max(tr * tr - 4.0 * det, 0.0)
        smin_sq = 0.5 * (tr - np.sqrt(disc))
        if smin_sq <= 1e-16:
            return None, False
        # 2x2 solve of Vy' theta = -Vz' written out
        a, b = Vy[0, 0], Vy[1, 0]
        c, d = Vy[0, 1], Vy[1, 1]
        rhs = -Vz.T
        theta = np.empty((2, rhs.shape[1]))
        inv_det = 1.0 / (a * d - b * c)
        theta[0] = (d * rhs[0] - b * rhs[1]) * inv_det
        theta[1] = (a * rhs[1] - c * rhs[0]) * inv_det
        return theta, True
    smin_sq = np.linalg.eigvalsh(Vy.T @ Vy)[0]
    if smin_sq <= 1e-16:
        return None, False
    theta = np.linalg.solve(Vy.T, -Vz.T)
    return theta, True


def rtls_step(state: RtlsState, sample: TrajectorySample, config: RtlsConfig) -> RtlsState:
    """Discount-update the measured correlation and track its smallest eigenvectors.

    Runs config.power_iters inverse power iterations (solves against
    C_tilde) with re-orthonormalization, then refreshes the parameter
    estimate from the basis. A singular C_tilde gets a jitter of
    config.jitter * I before the solve.
    """
    v = measurement_vector(sample, noisy=True)
    C = state.C_tilde
    np.multiply(C, state.beta, out=C)
    C += np.outer(v, v)
    V = state.nullspace_basis
    m = C.shape[0]
    # One factorization serves all power iterations of this step.
    try:
        C_inv = np.linalg.inv(C)
    except np.linalg.LinAlgError:
        C_inv = np.linalg.inv(C + config.jitter * np.eye(m))
    for _ in range(config.power_iters):
        V = _orthonormalize(C_inv @ V)
    state.nullspace_basis = V
    theta, identified = extract_parameters(V, state.theta_hat.shape[0])
    state.identified = identified
    if identified:
        state.theta_hat = theta
    state.step += 1
    return state


class RtlsEstimator:
    """Recursive total least squares over the measured correlation matrix."""

    kind = "rtls"

    def __init__(self, n: int, n_u: int, config: RtlsConfig | None = None):
        self.n = n
        self.n_u = n_u
        self.config = config if config is not None else RtlsConfig()
        self.state = init_rtls(n, n_u, self.config)

    def step(self, sample: TrajectorySample) -> "RtlsEstimator":
        rtls_step(self.state, sample, self.config)
        return self

    def theta(self) -> np.ndarray:
        return self.state.theta_hat.copy()

    def point_estimate(self, sample: TrajectorySample, inner_iters: int = 2) -> PointEstimate:
        return point_estimate(self.state.theta_hat, sample, self.config.alpha, inner_iters)


@dataclass(frozen=True)
class RlsConfig:
    beta: float = 0.995
    delta: float = 1e-8  # initial information matrix scale
    jitter: float = 1e-12
    alpha: float = 1e-8  # only used by the shared point-estimate projection

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")


@dataclass
class RlsState:
    theta_hat: np.ndarray
    info: np.ndarray  # discounted regressor information matrix
    cross: np.ndarray  # discounted regressor/target cross-correlation
    beta: float
    step: int = 0


def init_rls(n: int, n_u: int, config: RlsConfig) -> RlsState:
    q = n + n_u
    return RlsState(
        theta_hat=np.zeros((n, q)),
        info=config.delta * np.eye(q),
        cross=np.zeros((q, n)),
        beta=config.beta,
    )


def rls_step(state: RlsState, sample: TrajectorySample, config: RlsConfig) -> RlsState:
    """Exponentially weighted least squares of x_next on (x, u), all measured."""
    phi = np.concatenate((sample.x_noisy, sample.u_noisy))
    y = sample.x_next_noisy
    b = state.beta
    np.multiply(state.info, b, out=state.info)
    state.info += np.outer(phi, phi)
    np.multiply(state.cross, b, out=state.cross)
    state.cross += np.outer(phi, y)
    try:
        state.theta_hat = np.linalg.solve(state.info, state.cross).T
    except np.linalg.LinAlgError:
        q = state.info.shape[0]
        state.theta_hat = np.linalg.solve(state.info + config.jitter * np.eye(q), state.cross).T
    state.step += 1
    return state


class RlsEstimator:
    """Naive recursive least squares baseline (errors-in-variables biased)."""

    kind = "rls"

    def __init__(self, n: int, n_u: int, config: RlsConfig | None = None):
        self.n = n
        self.n_u = n_u
        self.config = config if config is not None else RlsConfig()
        self.state = init_rls(n, n_u, self.config)

    def step(self, sample: TrajectorySample) -> "RlsEstimator":
        rls_step(self.state, sample, self.config)
        return self

    def theta(self) -> np.ndarray:
        return self.state.theta_hat.copy()

    def point_estimate(self, sample: TrajectorySample, inner_iters: int = 2) -> PointEstimate:
        return point_estimate(self.state.theta_hat, sample, self.config.alpha, inner_iters)
