import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supcomm.core import ValidationError, block_expand, vectorize_edges
from supcomm.simulate import (Sec5Design, SgsbmSpec, generate_sec5, generate_sgsbm,
                              prop1_f_matrix)


def two_block_closed_form(n, p, q, Psi, C):
    """Matrix F for two equal communities with p^(m) on the diagonal cells and q^(m) off it."""
    xi1, xi2, xi3 = np.mean(p * p), np.mean(q * q), np.mean(p * q)
    within = n * (n - 2) / 4 * (C[0, 0] + C[1, 1])
    cross = n * n / 2 * C[0, 1]
    F = np.empty((2, 2))
    for j in range(2):
        F[j, j] = 2 * Psi[0, 0] * C[j, j] + xi1 * within + xi3 * cross
    F[0, 1] = F[1, 0] = 2 * Psi[0, 1] * C[0, 1] + xi3 * within + xi2 * cross
    return F


def test_sec5_edge_count():
    sample, labels, B = generate_sec5(Sec5Design(N=3))
    assert vectorize_edges(sample.adjacency).shape == (3, 780)
    assert sample.n_nodes == 40 and np.bincount(labels).tolist() == [10] * 4


def test_sec5_response_variance_from_edge_noise():
    design = Sec5Design(sigma=0.0, t=0.0, N=10_000, seed=7)
    sample, _, _ = generate_sec5(design)
    expected = 4 * 180 * design.s ** 2
    assert sample.responses.var(ddof=1) == pytest.approx(expected, rel=0.05)


def test_sec5_seeded_determinism():
    a, _, _ = generate_sec5(Sec5Design(seed=11, N=20))
    b, _, _ = generate_sec5(Sec5Design(seed=11, N=20))
    assert a.adjacency.tobytes() == b.adjacency.tobytes()
    assert a.responses.tobytes() == b.responses.tobytes()
    c, _, _ = generate_sec5(Sec5Design(seed=12, N=20))
    assert not np.array_equal(a.adjacency, c.adjacency)


def test_sec5_rejects_indivisible_n():
    with pytest.raises(ValidationError, match="divisible"):
        Sec5Design(n=42)


def test_classification_labels_are_balanced_signs():
    sample, _, _ = generate_sec5(Sec5Design(N=100, seed=2), task="classification")
    assert set(np.unique(sample.responses)) == {-1.0, 1.0}
    assert sample.responses.sum() == 0.0


def test_zero_variance_networks_are_block_constant():
    labels = np.repeat([0, 1, 2], [3, 4, 2])
    R = np.array([[1.0, 0.2, -0.3], [0.2, 0.5, 0.0], [-0.3, 0.0, 2.0]])
    A = generate_sgsbm(SgsbmSpec(labels, R, np.zeros((3, 3))), n_networks=4, seed=0)
    for M in A:
        np.testing.assert_array_equal(M, block_expand(labels, R))


def test_single_cell_moments():
    N = 4000
    A = generate_sgsbm(SgsbmSpec(np.zeros(5, dtype=int), [[0.0]], [[1.0]]), n_networks=N, seed=1)
    x = vectorize_edges(A)
    assert np.all(np.abs(x.mean(axis=0)) < 3 / np.sqrt(N))
    assert np.all(np.abs(x.var(axis=0, ddof=1) - 1.0) < 3 * np.sqrt(2 / N))


def test_iid_networks_have_uncorrelated_cells():
    N = 4000
    labels = np.repeat([0, 1], 4)
    R = np.array([[0.4, 0.1], [0.1, 0.4]])
    A = generate_sgsbm(SgsbmSpec(labels, R, np.full((2, 2), 0.5)), n_networks=N, seed=2)
    within, cross = A[:, 0, 1], A[:, 0, 7]
    other_within = A[:, 5, 6]
    for u in (cross, other_within):
        a = within - within.mean()
        b = u - u.mean()
        cov = (a * b).mean()
        se = np.sqrt(((a * b - cov) ** 2).mean() / N)
        assert abs(cov) < 3 * se


def test_generation_order_independent():
    labels = np.repeat([0, 1], 3)
    spec = SgsbmSpec(labels, np.eye(2), np.ones((2, 2)))
    full = generate_sgsbm(spec, n_networks=6, seed=3)
    prefix = generate_sgsbm(spec, n_networks=3, seed=3)
    assert full[:3].tobytes() == prefix.tobytes()


def test_spec_validation():
    with pytest.raises(ValidationError, match="symmetric"):
        SgsbmSpec([0, 1], [[0.0, 1.0], [0.0, 0.0]], np.ones((2, 2)))
    with pytest.raises(ValidationError, match="variances"):
        SgsbmSpec([0, 1], np.eye(2), -np.ones((2, 2)))


def test_f_matrix_without_means(rng):
    labels = np.repeat([0, 1, 2], 3)
    Psi = np.array([[1.0, 0.5, 0.2], [0.5, 2.0, 0.1], [0.2, 0.1, 0.7]])
    C = rng.standard_normal((3, 3))
    C = C + C.T
    F = prop1_f_matrix(SgsbmSpec(labels, np.zeros((5, 3, 3)), Psi), C)
    np.testing.assert_array_equal(F, 2 * Psi * C)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), half=st.integers(1, 6))
def test_f_matrix_two_block_closed_form(seed, half):
    rng = np.random.default_rng(seed)
    n, N = 2 * half, 9
    p, q = rng.normal(0, 0.5, N), rng.normal(0, 0.5, N)
    R = np.empty((N, 2, 2))
    R[:, 0, 0] = R[:, 1, 1] = p
    R[:, 0, 1] = R[:, 1, 0] = q
    Psi = np.array([[1 - np.mean(p * p), 1 - np.mean(q * q)]] * 2)
    Psi[1] = Psi[0][::-1]
    C = rng.standard_normal((2, 2))
    C = C + C.T
    F = prop1_f_matrix(SgsbmSpec(np.repeat([0, 1], half), R, Psi), C)
    np.testing.assert_allclose(F, two_block_closed_form(n, p, q, Psi, C), rtol=0,
                               atol=1e-10 * max(1.0, np.abs(F).max()))
