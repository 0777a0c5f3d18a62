"""Eigenpairs ordered by magnitude, and seeded k-means."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class EigenPairs(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


class KMeansResult(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int


def top_abs_eigen(M, k):
    """The ``k`` eigenpairs of symmetric ``M`` with largest ``|lambda|``.

    Ties in magnitude prefer the larger signed eigenvalue, then the lower
    position in ascending order. Each eigenvector is signed so that its
    largest-magnitude entry is positive.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError("matrix is not symmetric")
    values, vectors = np.linalg.eigh(0.5 * (M + M.T))
    order = np.lexsort((np.arange(n), -values, -np.abs(values)))[:k]
    values = values[order]
    vectors = vectors[:, order]
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    return EigenPairs(values, vectors * signs)


def _sq_dists(X, centers):
    """Squared distances between rows of ``X`` and each restart's centers.

    ``centers`` has shape ``(R, k, d)``; the result has shape ``(R, n, k)``.
    """
    d = ((X * X).sum(1)[None, :, None] - 2.0 * np.einsum("nd,rkd->rnk", X, centers)
         + (centers * centers).sum(2)[:, None, :])
    return np.maximum(d, 0.0)


def _kmeans_plusplus(X, k, uniforms):
    """D^2-weighted seeding for a batch of restarts.

    ``uniforms`` has shape ``(R, k)``; row ``r`` drives restart ``r``.
    """
    n = X.shape[0]
    R = uniforms.shape[0]
    rows = np.arange(R)
    centers = np.empty((R, k, X.shape[1]))
    first = np.minimum((uniforms[:, 0] * n).astype(int), n - 1)
    centers[:, 0] = X[first]
    closest = ((X[None] - centers[:, :1]) ** 2).sum(2)
    for j in range(1, k):
        cum = np.cumsum(closest, axis=1)
        total = cum[:, -1]
        target = uniforms[:, j] * total
        idx = (cum <= target[:, None]).sum(1)
        # all points coincide with chosen centers: pick uniformly
        idx = np.where(total > 0, idx, (uniforms[:, j] * n).astype(int))
        idx = np.minimum(idx, n - 1)
        centers[:, j] = X[idx]
        closest = np.minimum(closest, ((X[None] - centers[rows, j][:, None]) ** 2).sum(2))
    return centers


def _centroids(X, labels, k):
    """Per-restart centroids for labels of shape ``(R, n)``."""
    onehot = labels[..., None] == np.arange(k)
    counts = onehot.sum(1)
    sums = np.einsum("rnk,nd->rkd", onehot.astype(float), X)
    return sums / np.maximum(counts, 1)[..., None], counts


def _repair_empty(X, labels, centers, k):
    """Move the point farthest from its centroid into each empty cluster."""
    labels = labels.copy()
    centers = centers.copy()
    for j in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[j] > 0:
            continue
        dist = ((X - centers[labels]) ** 2).sum(1)
        dist[counts[labels] <= 1] = -1.0  # never empty another cluster
        far = int(np.argmax(dist))
        labels[far] = j
        centers[j] = X[far]
    return labels


def _assign(X, centers, k):
    labels = np.argmin(_sq_dists(X, centers), axis=2)
    counts = (labels[..., None] == np.arange(k)).sum(1)
    for r in np.flatnonzero((counts == 0).any(1)):
        labels[r] = _repair_empty(X, labels[r], centers[r], k)
    return labels


def _inertia(X, labels, centers):
    diff = X[None] - np.take_along_axis(centers, labels[..., None], axis=1)
    return (diff * diff).sum(axis=(1, 2))


def lloyd(X, centers, max_iter=100, check_monotone=False):
    """Lloyd iterations for a batch of restarts ``centers`` of shape ``(R, k, d)``.

    Each restart stops changing once its assignments are stable. Returns
    ``(labels, centers, inertia, n_iter)`` with a leading restart axis.
    """
    k = centers.shape[1]
    labels = _assign(X, centers, k)
    prev = np.full(centers.shape[0], np.inf)
    n_iter = np.zeros(centers.shape[0], dtype=int)
    active = np.ones(centers.shape[0], dtype=bool)
    for _ in range(max_iter):
        centers, _ = _centroids(X, labels, k)
        if check_monotone:
            obj = _inertia(X, labels, centers)
            assert np.all(obj <= prev * (1 + 1e-12) + 1e-12), "k-means objective increased"
            prev = obj
        new = _assign(X, centers, k)
        changed = (new != labels).any(1)
        n_iter += active
        active &= changed
        labels = new
        if not active.any():
            break
    centers, _ = _centroids(X, labels, k)
    return labels, centers, _inertia(X, labels, centers), n_iter


def kmeans(X, k, n_init=20, max_iter=100, seed=None, init_labels=None):
    """Lloyd's k-means with k-means++ seeding and independent restarts.

    Restart ``r`` is seeded by row ``r`` of a uniform table drawn from
    ``default_rng(seed)``, so the result does not depend on execution order. ``init_labels``, if
    given, adds one extra start from the centroids of that partition.

    Returns the restart with the smallest within-cluster sum of squares
    (the first one on ties).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n_rows, got k={k}, n_rows={n}")
    starts = np.empty((0, k, X.shape[1]))
    if init_labels is not None:
        init_labels = np.asarray(init_labels, dtype=np.intp)
        if (init_labels.shape == (n,) and init_labels.max() < k
                and np.all(np.bincount(init_labels, minlength=k) > 0)):
            starts = _centroids(X, init_labels[None], k)[0]
    if n_init < 0 or n_init + starts.shape[0] < 1:
        raise ValueError("need at least one k-means start")
    if n_init:
        uniforms = np.random.default_rng(seed).random((n_init, k))
        starts = np.concatenate([starts, _kmeans_plusplus(X, k, uniforms)])
    labels, centers, inertia, n_iter = lloyd(X, starts, max_iter=max_iter)
    best = int(np.argmin(inertia))
    return KMeansResult(labels[best], centers[best], float(inertia[best]), int(n_iter[best]))
