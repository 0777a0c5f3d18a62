import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supcomm.core import co_clustering_error
from supcomm.linalg import kmeans, lloyd, top_abs_eigen


def _sym(rng, n):
    M = rng.standard_normal((n, n))
    return M + M.T


def test_identity_pair_by_residual():
    pairs = top_abs_eigen(np.eye(4), 2)
    np.testing.assert_array_equal(pairs.values, [1.0, 1.0])
    V = pairs.vectors
    np.testing.assert_allclose(V.T @ V, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(np.eye(4) @ V - V * pairs.values, 0.0, atol=1e-12)


def test_diagonal_magnitude_order():
    pairs = top_abs_eigen(np.diag([3.0, -5.0, 1.0]), 2)
    np.testing.assert_array_equal(pairs.values, [-5.0, 3.0])
    np.testing.assert_allclose(np.abs(pairs.vectors), [[0, 1], [1, 0], [0, 0]])


def test_matches_full_decomposition(rng):
    M = _sym(rng, 8)
    full = np.linalg.eigvals(M).real
    expected = full[np.argsort(-np.abs(full))][:5]
    pairs = top_abs_eigen(M, 5)
    np.testing.assert_allclose(pairs.values, expected, atol=1e-9)
    np.testing.assert_allclose(M @ pairs.vectors, pairs.vectors * pairs.values, atol=1e-9)


def test_sign_convention(rng):
    V = top_abs_eigen(_sym(rng, 6), 3).vectors
    pivot = np.argmax(np.abs(V), axis=0)
    assert np.all(V[pivot, np.arange(3)] > 0)


def test_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        top_abs_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), n=st.integers(2, 9))
def test_eigenvalues_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    M = _sym(rng, n)
    P = np.eye(n)[rng.permutation(n)]
    k = max(1, n // 2)
    a = top_abs_eigen(M, k).values
    b = top_abs_eigen(P @ M @ P.T, k).values
    np.testing.assert_allclose(np.sort(np.abs(a)), np.sort(np.abs(b)), atol=1e-9)


def test_kmeans_duplicated_rows_exact():
    X = np.repeat(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]), 4, axis=0)
    res = kmeans(X, 3, seed=0)
    assert res.inertia == 0.0
    assert co_clustering_error(res.labels, np.arange(12) // 4) == 0.0


def test_kmeans_single_cluster(rng):
    X = rng.standard_normal((9, 3))
    res = kmeans(X, 1, seed=0)
    np.testing.assert_array_equal(res.labels, 0)
    np.testing.assert_allclose(res.centroids[0], X.mean(axis=0), atol=1e-14)


def _best_split(X):
    best = np.inf
    for bits in itertools.product((0, 1), repeat=X.shape[0]):
        lab = np.array(bits)
        if lab.min() == lab.max():
            continue
        cost = sum(((X[lab == j] - X[lab == j].mean(0)) ** 2).sum() for j in (0, 1))
        best = min(best, cost)
    return best


def test_kmeans_matches_exhaustive_oracle(rng):
    X = np.r_[rng.normal(0, 0.1, (3, 2)), rng.normal(3, 0.1, (3, 2))]
    res = kmeans(X, 2, seed=1)
    assert res.inertia == pytest.approx(_best_split(X), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_kmeans_never_worse_than_exhaustive_bound(seed):
    X = np.random.default_rng(seed).standard_normal((6, 2))
    assert kmeans(X, 2, seed=seed).inertia >= _best_split(X) - 1e-12


def test_lloyd_is_monotone(rng):
    X = rng.standard_normal((40, 3))
    centers = X[rng.choice(40, size=(5, 4), replace=True)]
    lloyd(X, centers, max_iter=50, check_monotone=True)


def test_kmeans_seeded_determinism(rng):
    X = rng.standard_normal((30, 4))
    a = kmeans(X, 4, seed=11)
    b = kmeans(X, 4, seed=11)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.inertia == b.inertia


def test_kmeans_warm_start_only():
    X = np.r_[np.zeros((3, 1)), np.ones((3, 1))]
    res = kmeans(X, 2, n_init=0, init_labels=[0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(res.labels, [0, 0, 0, 1, 1, 1])
    with pytest.raises(ValueError, match="at least one"):
        kmeans(X, 2, n_init=0)


def test_kmeans_repairs_empty_cluster():
    X = np.r_[np.zeros((5, 1)), [[1.0]]]
    res = kmeans(X, 3, n_init=0, init_labels=[0, 0, 0, 1, 2, 2])
    assert np.bincount(res.labels, minlength=3).min() > 0
