"""Discrete-time linear system simulation with outlier-contaminated measurements.

The noise model is weak Gaussian noise on every measured channel plus strong
uniform noise added to all components of a randomly chosen fraction of samples
(the outliers). Generation is fully deterministic given the seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionMismatchError

__all__ = [
    "LinearSystem",
    "NoiseConfig",
    "TrajectorySample",
    "simulate_step",
    "generate_trajectory",
    "measurement_vector",
    "stack_measurements",
    "write_trace",
    "read_trace",
]


@dataclass(frozen=True)
class LinearSystem:
    """Dynamics x_{t+1} = A x_t + B u_t."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatchError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatchError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        """Length of a stacked (x_{t+1}, x_t, u_t) measurement."""
        return 2 * self.n + self.n_u

    def theta(self) -> np.ndarray:
        """The stacked parameter matrix [A, B]."""
        return np.hstack((self.A, self.B))


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement noise description.

    snr is the per-channel amplitude ratio: signal RMS over Gaussian noise
    standard deviation (snr=100 puts the noise at 1% of the signal RMS; see
    the README for why the amplitude reading was chosen over a power ratio).
    mode="off" disables the Gaussian part entirely; it is a reserved flag
    rather than an infinite-snr sentinel. Outliers draw additive uniform
    noise from [outlier_low, outlier_high] on every component of the
    selected samples.
    """

    snr: float = 100.0
    outlier_ratio: float = 0.0
    outlier_low: float = -0.2
    outlier_high: float = 0.2
    seed: int = 0
    mode: str = "on"

    def __post_init__(self):
        if self.mode not in ("on", "off"):
            raise ValueError(f"mode must be 'on' or 'off', got {self.mode!r}")
        if self.snr <= 0.0:
            raise ValueError("snr must be positive")
        if not 0.0 <= self.outlier_ratio <= 1.0:
            raise ValueError("outlier_ratio must lie in [0, 1]")
        if not self.outlier_low < self.outlier_high:
            raise ValueError("outlier_low must be below outlier_high")

    @classmethod
    def off(cls, seed: int = 0) -> "NoiseConfig":
        """Fully noiseless configuration (no Gaussian noise, no outliers)."""
        return cls(mode="off", outlier_ratio=0.0, seed=seed)

    def with_ratio(self, ratio: float, seed: int | None = None) -> "NoiseConfig":
        return replace(self, outlier_ratio=ratio, seed=self.seed if seed is None else seed)


@dataclass(frozen=True)
class TrajectorySample:
    """One (x_{t+1}, x_t, u_t) triple, true and measured."""

    t: int
    x_next: np.ndarray
    x: np.ndarray
    u: np.ndarray
    x_next_noisy: np.ndarray
    x_noisy: np.ndarray
    u_noisy: np.ndarray
    is_outlier: bool = False


def simulate_step(sys: LinearSystem, x, u) -> np.ndarray:
    """One noiseless transition A x + B u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (sys.n,):
        raise DimensionMismatchError(f"state has shape {x.shape}, expected ({sys.n},)")
    if u.shape != (sys.n_u,):
        raise DimensionMismatchError(f"input has shape {u.shape}, expected ({sys.n_u},)")
    return sys.A @ x + sys.B @ u


def measurement_vector(sample: TrajectorySample, noisy: bool = True) -> np.ndarray:
    """Stack a sample into the (x_{t+1}, x_t, u_t) vector used everywhere."""
    if noisy:
        return np.concatenate((sample.x_next_noisy, sample.x_noisy, sample.u_noisy))
    return np.concatenate((sample.x_next, sample.x, sample.u))


def stack_measurements(samples, noisy: bool = True) -> np.ndarray:
    """Stack all samples into an (N, m) matrix of measurement vectors."""
    if noisy:
        xs_next = np.stack([s.x_next_noisy for s in samples])
        xs = np.stack([s.x_noisy for s in samples])
        us = np.stack([s.u_noisy for s in samples])
    else:
        xs_next = np.stack([s.x_next for s in samples])
        xs = np.stack([s.x for s in samples])
        us = np.stack([s.u for s in samples])
    return np.hstack((xs_next, xs, us))


def generate_trajectory(
    sys: LinearSystem,
    x0,
    input_std: float,
    N: int,
    noise: NoiseConfig,
) -> list[TrajectorySample]:
    """Simulate N steps and corrupt the measurements.

    Inputs are i.i.d. Gaussian with standard deviation input_std. Gaussian
    measurement noise is scaled per channel so that the empirical signal RMS
    divided by the noise standard deviation equals noise.snr. Exactly
    round(outlier_ratio * N) samples, chosen uniformly without replacement,
    additionally receive uniform noise on every component of their measured
    triple and are flagged is_outlier. The outlier perturbation applies to
    the sample's own copies only, so neighbouring samples sharing a time
    instant keep their plain Gaussian measurement.

    Identical arguments (including noise.seed) produce bit-identical output.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    n, n_u = sys.n, sys.n_u
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise DimensionMismatchError(f"x0 has shape {x0.shape}, expected ({n},)")

    rng = np.random.default_rng(noise.seed)
    U = rng.normal(0.0, input_std, size=(N, n_u))

    X = np.empty((N + 1, n))
    X[0] = x0
    A, B = sys.A, sys.B
    for t in range(N):
        X[t + 1] = A @ X[t] + B @ U[t]

    if noise.mode == "on":
        # Per-channel amplitude scaling: std = rms(signal)/snr, channel by channel.
        x_std = np.sqrt(np.mean(X * X, axis=0)) / noise.snr
        u_std = np.sqrt(np.mean(U * U, axis=0)) / noise.snr
        Xn = X + rng.normal(size=X.shape) * x_std
        Un = U + rng.normal(size=U.shape) * u_std
    else:
        Xn = X.copy()
        Un = U.copy()

    # Per-sample measured copies; outlier noise must not leak into the
    # neighbouring samples that share the underlying time instants.
    xs_next = Xn[1:].copy()
    xs = Xn[:-1].copy()
    us = Un.copy()

    flags = np.zeros(N, dtype=bool)
    n_out = int(round(noise.outlier_ratio * N))
    if n_out > 0:
        idx = np.sort(rng.choice(N, size=n_out, replace=False))
        extra = rng.uniform(noise.outlier_low, noise.outlier_high, size=(n_out, 2 * n + n_u))
        xs_next[idx] += extra[:, :n]
        xs[idx] += extra[:, n : 2 * n]
        us[idx] += extra[:, 2 * n :]
        flags[idx] = True

    return [
        TrajectorySample(
            t=t,
            x_next=X[t + 1],
            x=X[t],
            u=U[t],
            x_next_noisy=xs_next[t],
            x_noisy=xs[t],
            u_noisy=us[t],
            is_outlier=bool(flags[t]),
        )
        for t in range(N)
    ]


def _trace_header(n: int, n_u: int) -> list[str]:
    cols = ["t"]
    cols += [f"x{i + 1}" for i in range(n)]
    cols += [f"u{i + 1}" for i in range(n_u)]
    cols += [f"xn{i + 1}" for i in range(n)]
    cols += [f"x{i + 1}_noisy" for i in range(n)]
    cols += [f"u{i + 1}_noisy" for i in range(n_u)]
    cols += [f"xn{i + 1}_noisy" for i in range(n)]
    cols.append("is_outlier")
    return cols


def write_trace(path, samples) -> None:
    """Write samples as CSV: t, true x/u/x_next, noisy x/u/x_next, is_outlier.

    Floats are written with repr precision so read_trace round-trips exactly.
    """
    first = samples[0]
    n, n_u = first.x.shape[0], first.u.shape[0]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_trace_header(n, n_u))
        for s in samples:
            row = [s.t]
            for arr in (s.x, s.u, s.x_next, s.x_noisy, s.u_noisy, s.x_next_noisy):
                row.extend(repr(float(v)) for v in arr)
            row.append(int(s.is_outlier))
            writer.writerow(row)


def read_trace(path) -> list[TrajectorySample]:
    """Read a trace CSV written by write_trace."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        n = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
        n_u = sum(1 for c in header if c.startswith("u") and c[1:].isdigit())
        expected = _trace_header(n, n_u)
        if header != expected:
            raise ValueError(f"unrecognized trace header {header!r}")
        samples = []
        for row in reader:
            t = int(row[0])
            vals = np.array([float(v) for v in row[1:-1]])
            x = vals[:n]
            u = vals[n : n + n_u]
            x_next = vals[n + n_u : 2 * n + n_u]
            off = 2 * n + n_u
            x_noisy = vals[off : off + n]
            u_noisy = vals[off + n : off + n + n_u]
            x_next_noisy = vals[off + n + n_u : off + 2 * n + n_u]
            samples.append(
                TrajectorySample(
                    t=t,
                    x_next=x_next,
                    x=x,
                    u=u,
                    x_next_noisy=x_next_noisy,
                    x_noisy=x_noisy,
                    u_noisy=u_noisy,
                    is_outlier=bool(int(row[-1])),
                )
            )
    return samples
