"""Shared helpers for the test suite."""

import numpy as np

from airls import LinearSystem, TrajectorySample


def benchmark_system() -> LinearSystem:
    """The 2-state / 2-input reference system used across the suite."""
    return LinearSystem(A=[[0.8, -0.25], [-0.25, 0.25]], B=[[10.0, 2.0], [2.0, 10.0]])


def isotropic_samples(n, n_u, N, seed, radius=(0.9, 1.1)):
    """Bounded, direction-isotropic measurement triples.

    Each stacked measurement is a uniform direction on the sphere scaled to a
    radius drawn from the given band, so all rank-one sample matrices are
    bounded and the discounted average stays well conditioned. The true
    fields mirror the noisy ones; these traces exercise estimator dynamics,
    not system identification.
    """
    m = 2 * n + n_u
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(N, m))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    r = rng.uniform(radius[0], radius[1], size=(N, 1))
    V = q * r
    samples = []
    for t in range(N):
        v = V[t]
        samples.append(
            TrajectorySample(
                t=t,
                x_next=v[:n],
                x=v[n : 2 * n],
                u=v[2 * n :],
                x_next_noisy=v[:n],
                x_noisy=v[n : 2 * n],
                u_noisy=v[2 * n :],
            )
        )
    return samples, V
