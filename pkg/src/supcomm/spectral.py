"""Response-aware spectral clustering initializer."""
from __future__ import annotations

import logging
import warnings

import numpy as np

from .core import NetworkSample, ValidationError
from .linalg import kmeans, top_abs_eigen

logger = logging.getLogger(__name__)


def sigma_ay(sample: NetworkSample, allow_raw=False):
    """Edge-response cross moments ``(1/N) sum_m Y_m A^(m)``.

    On a standardized sample each entry is the marginal regression slope of
    the response on that edge. Raw samples are refused unless ``allow_raw``.
    """
    if not (sample.standardized or allow_raw):
        raise ValidationError(
            "sample is not standardized; call standardize() or pass allow_raw=True")
    y = sample.responses
    return np.tensordot(y, sample.adjacency, axes=(0, 0)) / y.shape[0]


def spectral_cluster(M, n_communities, n_init=20, max_iter=100, seed=None,
                     init_labels=None):
    """k-means on the rows of the top-``|lambda|`` eigenvectors of ``M``."""
    M = np.asarray(M, dtype=np.float64)
    K = int(n_communities)
    if not 1 <= K <= M.shape[0]:
        raise ValidationError(f"n_communities must be in [1, {M.shape[0]}], got {K}")
    if K == 1:
        return np.zeros(M.shape[0], dtype=np.intp)
    pairs = top_abs_eigen(M, K)
    scale = np.abs(pairs.values).max() if pairs.values.size else 0.0
    rank = int(np.count_nonzero(np.abs(pairs.values) > 1e-10 * max(scale, 1e-300)))
    if rank < K:
        warnings.warn(f"only {rank} of {K} leading eigenvalues are numerically nonzero",
                      RuntimeWarning, stacklevel=2)
    result = kmeans(pairs.vectors, K, n_init=n_init, max_iter=max_iter, seed=seed,
                    init_labels=init_labels)
    return result.labels


def spectral_init(sample: NetworkSample, n_communities, n_init=20, max_iter=100,
                  seed=None, allow_raw=False):
    """Initial partition from spectral clustering of :func:`sigma_ay`."""
    if not 1 <= n_communities <= sample.n_nodes:
        raise ValidationError(
            f"n_communities must be in [1, {sample.n_nodes}], got {n_communities}")
    S = sigma_ay(sample, allow_raw=allow_raw)
    return spectral_cluster(S, n_communities, n_init=n_init, max_iter=max_iter, seed=seed)
