import numpy as np
import pytest

from airls import (
    DimensionMismatchError,
    SingularNormalMatrixError,
    make_projector,
    solve_weighted_ls,
    weighted_pseudo_inverse,
)


def test_pseudo_inverse_identity():
    M = weighted_pseudo_inverse(np.eye(3), np.ones(3))
    np.testing.assert_allclose(M, np.eye(3), atol=1e-12)


def test_pseudo_inverse_hand_value():
    # Normal equations for a 2x1 column of ones under diag(1, 3):
    # (1 + 3)^-1 [1, 3] = [0.25, 0.75]
    X = np.array([[1.0], [1.0]])
    M = weighted_pseudo_inverse(X, np.array([1.0, 3.0]))
    np.testing.assert_allclose(M, [[0.25, 0.75]], rtol=1e-12)


def test_pseudo_inverse_matches_generic_lstsq_unweighted():
    rng = np.random.default_rng(0)
    for _ in range(100):
        X = rng.normal(size=(6, 3))
        M = weighted_pseudo_inverse(X, np.ones(6))
        ref = np.linalg.pinv(X)
        assert np.linalg.norm(M - ref) <= 1e-9 * np.linalg.norm(ref)


def test_pseudo_inverse_reproduction_property():
    # X M X == X for random weighted instances.
    rng = np.random.default_rng(1)
    for _ in range(100):
        p, q = rng.integers(3, 9), rng.integers(1, 3)
        X = rng.normal(size=(p, q + 1))
        w = rng.uniform(0.2, 5.0, size=p)
        M = weighted_pseudo_inverse(X, w)
        assert np.linalg.norm(X @ M @ X - X) <= 1e-9 * np.linalg.norm(X)


def test_pseudo_inverse_singular_raises():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])  # dependent columns
    with pytest.raises(SingularNormalMatrixError):
        weighted_pseudo_inverse(X, np.ones(3))


def test_pseudo_inverse_shape_checks():
    with pytest.raises(DimensionMismatchError):
        weighted_pseudo_inverse(np.eye(3), np.ones(4))


def test_solve_identity_returns_rhs():
    b = np.array([1.0, -2.0, 0.5])
    z = solve_weighted_ls(np.eye(3), b, np.array([0.1, 2.0, 7.0]))
    np.testing.assert_allclose(z, b, atol=1e-12)


def test_solve_hand_value():
    # (1*0 + 3*4) / (1 + 3) = 3
    X = np.array([[1.0], [1.0]])
    z = solve_weighted_ls(X, np.array([0.0, 4.0]), np.array([1.0, 3.0]))
    np.testing.assert_allclose(z, [3.0], rtol=1e-12)


def test_solve_consistent_overdetermined_exact():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(8, 3))
    z_true = rng.normal(size=3)
    b = X @ z_true
    z = solve_weighted_ls(X, b, rng.uniform(0.5, 2.0, size=8))
    assert np.linalg.norm(z - z_true) <= 1e-10 * np.linalg.norm(z_true)


def test_projector_zero_theta_is_block_selector():
    theta = np.zeros((2, 4))
    P = make_projector(theta, np.ones(6))
    expected = np.zeros((6, 6))
    expected[2:, 2:] = np.eye(4)
    np.testing.assert_allclose(P, expected, atol=1e-12)


def test_projector_fixes_null_space_vectors():
    rng = np.random.default_rng(3)
    theta = rng.normal(size=(2, 4))
    z = rng.normal(size=4)
    v = np.concatenate((theta @ z, z))  # satisfies the model exactly
    P = make_projector(theta, rng.uniform(0.1, 3.0, size=6))
    np.testing.assert_allclose(P @ v, v, rtol=1e-9, atol=1e-12)


def test_projector_invariants():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n, n_u = 2, rng.integers(1, 3)
        theta = rng.normal(size=(n, n + n_u))
        m = 2 * n + n_u
        w = rng.uniform(0.05, 10.0, size=m)
        P = make_projector(theta, w)
        G = np.hstack((-np.eye(n), theta))
        assert np.linalg.norm(P @ P - P) <= 1e-9 * np.linalg.norm(P)
        assert np.linalg.norm(G @ P) <= 1e-9 * np.linalg.norm(G)


def test_projector_matches_kkt_oracle():
    # P @ c must solve: minimize ||d - c||^2_W subject to [-I, theta] d = 0,
    # checked against the KKT system of that constrained problem.
    rng = np.random.default_rng(5)
    for _ in range(50):
        theta = rng.normal(size=(2, 4))
        m = 6
        w = rng.uniform(0.1, 5.0, size=m)
        c = rng.normal(size=m)
        G = np.hstack((-np.eye(2), theta))
        kkt = np.zeros((m + 2, m + 2))
        kkt[:m, :m] = 2.0 * np.diag(w)
        kkt[:m, m:] = G.T
        kkt[m:, :m] = G
        rhs = np.concatenate((2.0 * w * c, np.zeros(2)))
        d_oracle = np.linalg.solve(kkt, rhs)[:m]
        d = make_projector(theta, w) @ c
        assert np.linalg.norm(d - d_oracle) <= 1e-8 * max(np.linalg.norm(d_oracle), 1e-12)
