import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pkbp.numcore import InvalidArgument, cosine, derive_seed, rng, svd


def cyclic_jacobi_eigenvalues(S, sweeps=100):
    """Two-sided cyclic Jacobi on a symmetric matrix; scalar loops on purpose."""
    S = np.array(S, dtype=float)
    n = S.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(S**2) - np.sum(np.diag(S) ** 2))
        if off < 1e-14 * max(1.0, np.abs(S).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(S[p, q]) < 1e-300:
                    continue
                theta = (S[q, q] - S[p, p]) / (2 * S[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                S = J.T @ S @ J
    return np.sort(np.diag(S))[::-1]


def check_svd(A, tol=1e-8):
    r = svd(A)
    k = min(A.shape)
    assert r.U.shape == (A.shape[0], k)
    assert r.V.shape == (A.shape[1], k)
    assert np.all(np.diff(r.singular_values) <= 1e-12)
    assert np.all(r.singular_values >= 0)
    np.testing.assert_allclose(r.U.T @ r.U, np.eye(k), atol=tol)
    np.testing.assert_allclose(r.V.T @ r.V, np.eye(k), atol=tol)
    err = np.linalg.norm(A - r.reconstruct())
    assert err <= tol * max(1.0, np.linalg.norm(A))
    return r


def test_identity():
    r = check_svd(np.eye(3))
    np.testing.assert_allclose(r.singular_values, [1, 1, 1])


def test_zero_matrix():
    r = check_svd(np.zeros((4, 3)))
    np.testing.assert_array_equal(r.singular_values, [0, 0, 0])


def test_random_20x8_against_jacobi_eigen_oracle():
    A = np.random.default_rng(7).normal(size=(20, 8))
    r = check_svd(A)
    eig = cyclic_jacobi_eigenvalues(A.T @ A)
    np.testing.assert_allclose(r.singular_values, np.sqrt(np.clip(eig, 0, None)), atol=1e-6)


@pytest.mark.parametrize("shape", [(1, 5), (5, 1), (7, 30), (200, 200), (60, 3)])
def test_shapes(shape):
    A = np.random.default_rng(sum(shape)).normal(size=shape)
    check_svd(A)


def test_rank_deficient_completes_basis():
    rng_ = np.random.default_rng(1)
    A = rng_.normal(size=(12, 2)) @ rng_.normal(size=(2, 6))
    r = check_svd(A)
    assert np.all(r.singular_values[2:] < 1e-10)


def test_non_finite_rejected():
    with pytest.raises(InvalidArgument):
        svd([[1.0, np.nan]])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_svd_property(A):
    check_svd(A)


def test_cosine_examples():
    assert cosine((1, 0), (1, 0)) == 1.0
    assert cosine((1, 0), (0, 1)) == 0.0
    assert cosine((0, 0), (1, 1)) == 0.0
    with pytest.raises(InvalidArgument):
        cosine((1, 2), (1, 2, 3))


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.floats(1e-3, 1e3))
def test_cosine_symmetric_and_scale_invariant(u, v, alpha):
    assert cosine(u, v) == pytest.approx(cosine(v, u), abs=1e-12)
    if np.linalg.norm(u) > 1e-6:
        assert cosine(np.multiply(alpha, u), v) == pytest.approx(cosine(u, v), abs=1e-9)


def test_seed_streams_are_stable_and_distinct():
    assert derive_seed(42, "linkpred") == derive_seed(42, "linkpred")
    assert derive_seed(42, "linkpred") != derive_seed(42, "sketch")
    a = rng(3, "x").random(5)
    b = rng(3, "x").random(5)
    np.testing.assert_array_equal(a, b)
