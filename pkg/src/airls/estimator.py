"""AIRLS: alternating, iteratively-reweighted recursive least squares.

Each incoming sample updates the discounted correlation matrix, then the
estimator alternates between a reweighted update of the correlation's Z block
(one oblique projection per column) and a reweighted update of the parameter
matrix, and finally writes the estimated Z block back into the correlation.
The default single pass per sample (K = L_Z = L_Theta = 1) is the streaming
estimator; larger loop counts give the full nested-iteration variant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .correlation import (
    CorrelationState,
    build_gamma,
    discount_update,
    initial_correlation,
    replace_z_block,
)
from .exceptions import DimensionMismatchError, InvalidBoundsError, SingularNormalMatrixError
from .kernels import COND_LIMIT, make_projector, solve_weighted_ls
from .sim import TrajectorySample, measurement_vector

__all__ = [
    "Regularization",
    "EstimatorConfig",
    "EstimatorState",
    "PointEstimate",
    "init_state",
    "state_weights",
    "update_Z_column",
    "update_Z",
    "param_weights",
    "update_theta",
    "airls_step",
    "point_estimate",
    "residual_norm_sq",
    "check_beta_bound",
    "gamma_bounds",
    "AirlsEstimator",
    "save_snapshot",
    "load_snapshot",
    "SNAPSHOT_VERSION",
]

# Target condition number after a ridge_fallback retry of a singular
# parameter solve; the appended rows are scaled to the data.
RIDGE_FALLBACK_COND = 1e10

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Regularization:
    """Prior term Psi vec(theta) ~ mu added to the parameter problem.

    Zero rows (M = 0) encode the unregularized problem.
    """

    Psi: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        Psi = np.asarray(self.Psi, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if Psi.ndim != 2:
            raise DimensionMismatchError("Psi must be 2-D")
        if mu.shape != (Psi.shape[0],):
            raise DimensionMismatchError(
                f"mu has shape {mu.shape}, expected ({Psi.shape[0]},)"
            )
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "mu", mu)
        # A square diagonal Psi lets the parameter solve decouple per state
        # row; cache its diagonal once.
        diag = None
        if Psi.shape[0] == Psi.shape[1] and np.count_nonzero(Psi - np.diag(np.diag(Psi))) == 0:
            diag = np.diag(Psi).copy()
        object.__setattr__(self, "_psi_diag", diag)

    @property
    def M(self) -> int:
        return self.Psi.shape[0]

    @classmethod
    def none(cls, n: int, n_u: int) -> "Regularization":
        p = n * (n + n_u)
        return cls(Psi=np.zeros((0, p)), mu=np.zeros(0))

    @classmethod
    def ridge(cls, scale: float, n: int, n_u: int) -> "Regularization":
        p = n * (n + n_u)
        return cls(Psi=scale * np.eye(p), mu=np.zeros(p))


@dataclass(frozen=True)
class EstimatorConfig:
    beta: float = 0.995
    alpha: float = 1e-8
    K: int = 1
    L_Z: int = 1
    L_Theta: int = 1
    ridge_fallback: bool = True
    c0_scale: float = 1.0
    track_residual: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if min(self.K, self.L_Z, self.L_Theta) < 1:
            raise ValueError("loop counts must be at least 1")
        if self.c0_scale <= 0.0:
            raise ValueError("c0_scale must be positive")


@dataclass
class EstimatorState:
    theta_hat: np.ndarray
    Z_hat: np.ndarray
    corr: CorrelationState
    last_residual_sq: float = 0.0
    step: int = 0


@dataclass(frozen=True)
class PointEstimate:
    """Reconstructed state/input triple lying in the model's null space."""

    x_next_hat: np.ndarray
    x_hat: np.ndarray
    u_hat: np.ndarray


def init_state(n: int, n_u: int, config: EstimatorConfig) -> EstimatorState:
    """Zero parameters, C = c0_scale * I, and the Z block of C as first Z_hat."""
    corr = initial_correlation(n, n_u, config.beta, scale=config.c0_scale)
    return EstimatorState(
        theta_hat=np.zeros((n, n + n_u)),
        Z_hat=corr.z_block().copy(),
        corr=corr,
    )


def state_weights(theta_hat, z_col_prev, c_col, alpha: float) -> np.ndarray:
    """Reweighting diagonal for one Z column.

    The residual stacks the model mismatch theta_hat z - y against the data
    deviation z - z_data, both taken at the previous iterate; each weight is
    (r_j^2 + alpha)^(-1/2).
    """
    n = theta_hat.shape[0]
    r = np.concatenate((theta_hat @ z_col_prev - c_col[:n], z_col_prev - c_col[n:]))
    return 1.0 / np.sqrt(r * r + alpha)


def update_Z_column(theta_hat, c_col, w) -> np.ndarray:
    """Solve one reweighted column problem via the oblique projection.

    Returns the bottom block of P @ c_col, which minimizes
    ||[theta_hat; I] z - c_col||^2_W over z.
    """
    n = theta_hat.shape[0]
    P = make_projector(theta_hat, w)
    return (P @ c_col)[n:]


def update_Z(theta_hat, C, z_prev, alpha: float) -> np.ndarray:
    """One reweighted update of all columns of the Z block.

    Column i gets its own weights from z_prev[:, i] and its own projection;
    the columns are independent problems, computed here in one batch. The
    result equals calling update_Z_column per column in any order.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    n, q = theta_hat.shape
    m = n + q
    if C.shape != (m, m) or z_prev.shape != (q, m):
        raise DimensionMismatchError("C or z_prev shape inconsistent with theta_hat")
    G = np.hstack((-np.eye(n), theta_hat))
    resid = np.vstack((theta_hat @ z_prev - C[:n], z_prev - C[n:]))
    w_inv = np.sqrt(resid * resid + alpha)  # m x m, column i holds 1/w for column i
    # Per-column n x n systems (G diag(w_inv_i) G') y_i = G c_i.
    g = G @ C
    if n == 2:
        # Closed-form symmetric 2x2 solve; avoids LAPACK dispatch per step.
        a00 = (G[0] * G[0]) @ w_inv
        a01 = (G[0] * G[1]) @ w_inv
        a11 = (G[1] * G[1]) @ w_inv
        det = a00 * a11 - a01 * a01
        y = np.empty((m, 2))
        y[:, 0] = (a11 * g[0] - a01 * g[1]) / det
        y[:, 1] = (a00 * g[1] - a01 * g[0]) / det
    else:
        A = np.einsum("aj,ji,bj->iab", G, w_inv, G)
        y = np.linalg.solve(A, g.T[:, :, None])[:, :, 0]
    projected = C.T - w_inv.T * (y @ G)  # row i is the projection of column i
    return np.ascontiguousarray(projected[:, n:].T)


def param_weights(theta_prev, Z_hat, Y_block, reg: Regularization, alpha: float) -> np.ndarray:
    """Reweighting diagonal for the vectorized parameter problem.

    Stacks the data residual vec(theta_prev Z_hat - Y) over the prior
    residual Psi vec(theta_prev) - mu.
    """
    theta_prev = np.asarray(theta_prev, dtype=float)
    r_data = (theta_prev @ Z_hat - Y_block).ravel(order="F")
    if reg.M == 0:
        r = r_data
    else:
        psi_diag = getattr(reg, "_psi_diag", None)
        theta_vec = theta_prev.ravel(order="F")
        r_reg = (psi_diag * theta_vec if psi_diag is not None else reg.Psi @ theta_vec) - reg.mu
        r = np.concatenate((r_data, r_reg))
    return 1.0 / np.sqrt(r * r + alpha)


def _regressor_stack(Z_hat, n: int, Psi) -> np.ndarray:
    """Stack the vectorized data regressor (Z_hat' kron I_n) over Psi."""
    q, m = Z_hat.shape
    K = np.einsum("pq,ab->paqb", Z_hat.T, np.eye(n)).reshape(m * n, q * n)
    if Psi.shape[0] == 0:
        return K
    return np.vstack((K, Psi))


def _solve_theta_decoupled(Z_hat, Y_block, psi_diag, mu, V) -> np.ndarray:
    """Parameter solve for a diagonal (or empty) prior.

    With Psi diagonal the weighted normal matrix of the vectorized problem
    is block diagonal, one (n+n_u) block per state row, which is solved
    batched. Identical to the stacked route up to floating-point order.
    """
    n, m = Y_block.shape
    q = Z_hat.shape[0]
    Vd = V[: n * m].reshape(m, n).T  # (n, m): data weights per state row
    A = np.einsum("qp,bp,rp->bqr", Z_hat, Vd, Z_hat)
    rhs = np.einsum("qp,bp->bq", Z_hat, Vd * Y_block)
    if psi_diag is not None:
        Vp = V[n * m :].reshape(q, n).T  # (n, q): prior weights per state row
        pd = psi_diag.reshape(q, n).T
        w = Vp * pd
        A.reshape(n, q * q)[:, :: q + 1] += w * pd  # strided view of block diagonals
        rhs += w * mu.reshape(q, n).T
    # Conditioning of the full normal matrix is the spread over all blocks.
    evals = np.linalg.eigvalsh(A)
    lo = float(evals[:, 0].min())
    hi = float(evals[:, -1].max())
    if hi <= 0.0 or lo <= hi / COND_LIMIT:
        cond = np.inf if lo <= 0.0 else hi / lo
        raise SingularNormalMatrixError(
            f"normal matrix is numerically singular (cond={cond:.3e})"
        )
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def update_theta(Z_hat, Y_block, reg: Regularization, V, ridge_fallback: bool = False) -> np.ndarray:
    """Solve the reweighted parameter problem and reshape back to n x (n+n_u).

    minimizes ||[Z_hat' kron I; Psi] vec(theta) - [vec(Y); mu]||^2_V. On a
    singular normal matrix, ridge_fallback retries once with eps * I appended
    to the prior rows (targets zero, unit weights), eps scaled so the
    augmented normal matrix has condition number ~RIDGE_FALLBACK_COND.
    """
    Y_block = np.asarray(Y_block, dtype=float)
    n = Y_block.shape[0]
    q = Z_hat.shape[0]
    psi_diag = getattr(reg, "_psi_diag", None)
    try:
        if psi_diag is not None or reg.M == 0:
            return _solve_theta_decoupled(
                Z_hat, Y_block, psi_diag if reg.M else None, reg.mu, V
            )
        X = _regressor_stack(Z_hat, n, reg.Psi)
        rhs = np.concatenate((Y_block.ravel(order="F"), reg.mu))
        theta_vec = solve_weighted_ls(X, rhs, V)
        return theta_vec.reshape((n, q), order="F")
    except SingularNormalMatrixError:
        if not ridge_fallback:
            raise
    X = _regressor_stack(Z_hat, n, reg.Psi)
    rhs = np.concatenate((Y_block.ravel(order="F"), reg.mu))
    p = n * q
    lam_max = float(np.linalg.eigvalsh((X * np.asarray(V)[:, None]).T @ X)[-1])
    eps = np.sqrt(max(lam_max, 1e-300) / RIDGE_FALLBACK_COND)
    X = np.vstack((X, eps * np.eye(p)))
    rhs = np.concatenate((rhs, np.zeros(p)))
    V = np.concatenate((V, np.ones(p)))
    theta_vec = solve_weighted_ls(X, rhs, V)
    return theta_vec.reshape((n, q), order="F")


def residual_norm_sq(theta_hat, C, reg: Regularization) -> float:
    """Squared 2-norm of the stacked model and prior residuals.

    The data part is vec([-I, theta_hat] C); the prior part is
    Psi vec(theta_hat) - mu.
    """
    n = theta_hat.shape[0]
    data = theta_hat @ C[n:] - C[:n]
    r_reg = reg.Psi @ theta_hat.ravel(order="F") - reg.mu
    d = data.ravel()
    return float(d @ d + r_reg @ r_reg)


def airls_step(
    state: EstimatorState,
    sample: TrajectorySample,
    config: EstimatorConfig,
    reg: Regularization,
) -> EstimatorState:
    """Process one sample: correlate, alternate Z and theta updates, substitute.

    Runs K outer iterations of L_Z reweighted Z updates followed by L_Theta
    reweighted parameter updates, each inner pass taking its weights from the
    previous iterate, then writes the final Z estimate into the correlation's
    Z block. Mutates state in place and returns it. Outlier samples are
    handled like any other; no exception is raised for them.
    """
    corr = state.corr
    discount_update(corr, build_gamma(sample, use_noisy=True))
    C = corr.C
    n = corr.n
    Y = C[:n]
    alpha = config.alpha
    theta = state.theta_hat
    z_iter = state.Z_hat
    for _ in range(config.K):
        for _ in range(config.L_Z):
            z_iter = update_Z(theta, C, z_iter, alpha)
        for _ in range(config.L_Theta):
            V = param_weights(theta, z_iter, Y, reg, alpha)
            theta = update_theta(z_iter, Y, reg, V, ridge_fallback=config.ridge_fallback)
    state.theta_hat = theta
    state.Z_hat = z_iter
    replace_z_block(corr, z_iter)
    if config.track_residual:
        state.last_residual_sq = residual_norm_sq(theta, C, reg)
    state.step += 1
    return state


def point_estimate(theta_hat, sample: TrajectorySample, alpha: float, inner_iters: int = 2) -> PointEstimate:
    """Project one measured triple onto the current model's null space.

    Weights start from the raw measurements, then each further pass
    reweights with the latest reconstruction; the default performs one
    reweighting pass after the measurement-initialized one.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = theta_hat.shape[0]
    c = measurement_vector(sample, noisy=True)
    z_meas = c[n:]
    est = z_meas
    d = c
    for _ in range(max(1, inner_iters)):
        r = np.concatenate((theta_hat @ est - c[:n], est - z_meas))
        w = 1.0 / np.sqrt(r * r + alpha)
        d = make_projector(theta_hat, w) @ c
        est = d[n:]
    return PointEstimate(x_next_hat=d[:n], x_hat=d[n : 2 * n], u_hat=d[2 * n :])


def check_beta_bound(gamma_max: float, gamma_min: float, beta: float) -> bool:
    """True when 1 - beta <= (gamma_min / gamma_max)^2.

    Holding this bound is sufficient (not necessary) for the step-to-step
    residual of the estimator to be non-increasing.
    """
    if gamma_min <= 0.0 or gamma_max <= 0.0:
        raise InvalidBoundsError("gamma bounds must be positive")
    if gamma_min > gamma_max:
        raise InvalidBoundsError(f"gamma_min {gamma_min} exceeds gamma_max {gamma_max}")
    return (1.0 - beta) <= (gamma_min / gamma_max) ** 2


def gamma_bounds(V, beta: float, c0_scale: float = 1.0, stride: int | None = None,
                 warmup: int | None = None) -> tuple[float, float]:
    """Empirical (gamma_max, gamma_min) estimates from stacked measurements.

    gamma_max is the largest eigenvalue of any rank-one sample matrix, i.e.
    the largest squared measurement norm. gamma_min is a heuristic: the
    minimum, over strided checkpoints after a warmup of roughly one
    forgetting horizon, of the smallest eigenvalue of the discounted average
    measurement (1 - beta) * C_t built from the raw measurements.
    """
    V = np.asarray(V, dtype=float)
    N, m = V.shape
    gamma_max = float(np.max(np.einsum("ij,ij->i", V, V)))
    if stride is None:
        stride = max(1, N // 100)
    if warmup is None:
        warmup = min(int(np.ceil(1.0 / (1.0 - beta))), N // 2)
    C = c0_scale * np.eye(m)
    gamma_min = np.inf
    for start in range(0, N, stride):
        chunk = V[start : start + stride]
        s = chunk.shape[0]
        wts = beta ** np.arange(s - 1, -1, -1.0)
        C = (beta**s) * C + (chunk * wts[:, None]).T @ chunk
        if start + s >= warmup:
            lam = np.linalg.eigvalsh((1.0 - beta) * C)[0]
            gamma_min = min(gamma_min, lam)
    if not np.isfinite(gamma_min):
        gamma_min = float(np.linalg.eigvalsh((1.0 - beta) * C)[0])
    return gamma_max, max(float(gamma_min), 0.0)


class AirlsEstimator:
    """Streaming estimator with the uniform step/theta/point_estimate interface."""

    kind = "airls"

    def __init__(self, n: int, n_u: int, config: EstimatorConfig | None = None,
                 reg: Regularization | None = None):
        self.n = n
        self.n_u = n_u
        self.config = config if config is not None else EstimatorConfig()
        self.reg = reg if reg is not None else Regularization.none(n, n_u)
        self.state = init_state(n, n_u, self.config)

    def step(self, sample: TrajectorySample) -> "AirlsEstimator":
        airls_step(self.state, sample, self.config, self.reg)
        return self

    def theta(self) -> np.ndarray:
        return self.state.theta_hat.copy()

    def point_estimate(self, sample: TrajectorySample, inner_iters: int = 2) -> PointEstimate:
        return point_estimate(self.state.theta_hat, sample, self.config.alpha, inner_iters)

    def residual(self) -> float:
        """Latest squared residual norm (tracked per step)."""
        return self.state.last_residual_sq


def save_snapshot(path, state: EstimatorState, config: EstimatorConfig) -> None:
    """Serialize estimator state to the versioned JSON snapshot format."""
    corr = state.corr
    payload = {
        "version": SNAPSHOT_VERSION,
        "n": corr.n,
        "n_u": corr.n_u,
        "beta": config.beta,
        "alpha": config.alpha,
        "K": config.K,
        "L_Z": config.L_Z,
        "L_Theta": config.L_Theta,
        "theta_hat": state.theta_hat.ravel().tolist(),  # row-major
        "C": corr.C.ravel().tolist(),  # row-major
        "step": state.step,
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_snapshot(path, reg: Regularization | None = None) -> tuple[EstimatorState, EstimatorConfig]:
    """Rebuild (state, config) from a snapshot.

    The Z-block of the stored C is the post-substitution estimate, so Z_hat
    is recovered directly from it. The residual is recomputed under reg
    (default: no regularization).
    """
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {payload.get('version')!r}")
    n, n_u = int(payload["n"]), int(payload["n_u"])
    m = 2 * n + n_u
    config = EstimatorConfig(
        beta=float(payload["beta"]),
        alpha=float(payload["alpha"]),
        K=int(payload["K"]),
        L_Z=int(payload["L_Z"]),
        L_Theta=int(payload["L_Theta"]),
    )
    C = np.array(payload["C"], dtype=float).reshape(m, m)
    corr = CorrelationState(C=C, beta=config.beta, n=n, n_u=n_u)
    theta = np.array(payload["theta_hat"], dtype=float).reshape(n, n + n_u)
    if reg is None:
        reg = Regularization.none(n, n_u)
    state = EstimatorState(
        theta_hat=theta,
        Z_hat=corr.z_block().copy(),
        corr=corr,
        last_residual_sq=residual_norm_sq(theta, C, reg),
        step=int(payload["step"]),
    )
    return state, config
