"""Weighted Gaussian stochastic block model samples.

Randomness comes from ``numpy.random.Generator(PCG64)`` streams spawned from a
``SeedSequence``: network ``m`` always uses child ``m``, so output does not
depend on generation order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NetworkSample, ValidationError, block_expand, check_labels, inner


@dataclass(frozen=True)
class SgsbmSpec:
    """Gaussian block model for a sample of networks.

    ``R`` holds per-network cell means, shape ``(N, K, K)`` (or ``(K, K)``
    shared by all networks). ``Psi`` holds cell variances, ``(K, K)`` or
    ``(N, K, K)``.
    """

    labels: np.ndarray
    R: np.ndarray
    Psi: np.ndarray

    def __post_init__(self):
        labels, K = check_labels(self.labels)
        R = np.asarray(self.R, dtype=np.float64)
        Psi = np.asarray(self.Psi, dtype=np.float64)
        if R.ndim == 2:
            R = R[None]
        for name, M in (("R", R), ("Psi", Psi)):
            if M.shape[-2:] != (K, K):
                raise ValidationError(f"{name} must be {K}x{K} per network, got {M.shape}")
            if not np.array_equal(M, np.swapaxes(M, -1, -2)):
                raise ValidationError(f"{name} must be symmetric")
        if np.any(Psi < 0) or not np.all(np.isfinite(Psi)):
            raise ValidationError("cell variances must be finite and non-negative")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Psi", Psi)

    @property
    def n_communities(self):
        return self.R.shape[-1]


@dataclass(frozen=True)
class Sec5Design:
    """Four-community simulation design with a tunable community contrast.

    Cell means are 0.3 on the diagonal cells and on the (1,2), (3,4) cells,
    0.1 elsewhere, with ``t * U_m`` added to the diagonal cells and
    ``U_m ~ Uniform(-0.5, 0.5)`` per network. Edge noise has standard
    deviation ``s``; responses add ``Normal(0, sigma^2)`` noise to
    ``<A, B>`` with ``B_uv = 1`` inside communities.
    """

    n: int = 40
    K: int = 4
    s: float = 0.1
    t: float = 0.025
    sigma: float = 1.0
    N: int = 150
    seed: int | None = 0

    def __post_init__(self):
        if self.K != 4:
            raise ValidationError("this design is defined for K = 4 communities")
        if self.n % self.K:
            raise ValidationError(f"n={self.n} is not divisible by K={self.K}")
        if self.t < 0 or self.s < 0 or self.sigma < 0 or self.N < 1:
            raise ValidationError("t, s, sigma must be non-negative and N positive")

    def true_labels(self):
        return np.repeat(np.arange(self.K), self.n // self.K)

    def true_C(self):
        return np.eye(self.K)

    def base_means(self):
        R = np.full((self.K, self.K), 0.1)
        R[:2, :2] = 0.3
        R[2:, 2:] = 0.3
        return R


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _children(seed, count):
    return [np.random.default_rng(c) for c in _seed_sequence(seed).spawn(count)]


def _draw_network(rng, labels, R, Psi):
    n = labels.size
    iu = np.triu_indices(n, k=1)
    zu, zv = labels[iu[0]], labels[iu[1]]
    mean = R[zu, zv]
    sd = np.sqrt(Psi[zu, zv])
    A = np.zeros((n, n))
    A[iu] = mean + sd * rng.standard_normal(mean.size)
    return A + A.T


def generate_sgsbm(spec: SgsbmSpec, n_networks=None, seed=None):
    """Draw independent Gaussian-edge networks from ``spec``.

    Returns the ``(N, n, n)`` adjacency stack.
    """
    N = spec.R.shape[0] if n_networks is None else int(n_networks)
    if spec.R.shape[0] not in (1, N):
        raise ValidationError(f"R has {spec.R.shape[0]} networks, asked for {N}")
    Psi = spec.Psi if spec.Psi.ndim == 3 else np.broadcast_to(spec.Psi, (N,) + spec.Psi.shape)
    R = np.broadcast_to(spec.R, (N,) + spec.R.shape[1:])
    out = np.empty((N, spec.labels.size, spec.labels.size))
    for m, rng in enumerate(_children(seed, N)):
        out[m] = _draw_network(rng, spec.labels, R[m], Psi[m])
    return out


def linear_responses(A, B, sigma, rng):
    """``<A^(m), B> + sigma * eps_m`` with standard normal noise."""
    y = inner(A, B)
    return y + sigma * rng.standard_normal(y.shape[0])


def generate_sec5(design: Sec5Design = Sec5Design(), task="regression", label_noise=0.0,
                  C=None):
    """Sample from :class:`Sec5Design`.

    For ``task="classification"`` the label is the sign of the noisy linear
    score (centered at its sample median), with a fraction ``label_noise``
    of labels flipped at random.

    Returns
    -------
    sample : NetworkSample
    labels : ndarray of int, true communities
    B : ndarray, true coefficient matrix
    """
    labels = design.true_labels()
    C = design.true_C() if C is None else np.asarray(C, dtype=np.float64)
    B = block_expand(labels, C)
    ss = _seed_sequence(design.seed)
    u_seq, edge_seq, noise_seq, flip_seq = ss.spawn(4)
    U = np.random.default_rng(u_seq).uniform(-0.5, 0.5, size=design.N)
    base = design.base_means()
    R = np.repeat(base[None], design.N, axis=0)
    idx = np.arange(design.K)
    R[:, idx, idx] += design.t * U[:, None]
    spec = SgsbmSpec(labels, R, np.full((design.K, design.K), design.s ** 2))
    A = generate_sgsbm(spec, seed=edge_seq)
    y = linear_responses(A, B, design.sigma, np.random.default_rng(noise_seq))
    if task == "classification":
        score = y - np.median(y)
        y = np.where(score >= 0, 1.0, -1.0)
        if label_noise > 0:
            flip = np.random.default_rng(flip_seq).random(design.N) < label_noise
            y[flip] = -y[flip]
    sample = NetworkSample(A, y, task=task,
                           meta={"generator": "sec5", "t": design.t, "s": design.s,
                                 "sigma": design.sigma, "seed": design.seed})
    return sample, labels, B


def prop1_f_matrix(spec: SgsbmSpec, C):
    """Cell matrix ``F`` with ``E[(1/N) sum_m Y_m A^(m)] = Z F Z^T - diag(Z F Z^T)``.

    ``F_jk = 2 Psi_jk C_jk + 2 sum_{s<t} (1/N sum_m R^(m)_jk R^(m)_{z_s z_t}) C_{z_s z_t}``,
    evaluated by direct summation over node pairs. ``Psi`` is the average
    cell variance across networks. Holds for responses
    ``<A, Z C Z^T> + noise`` without any standardization.
    """
    C = np.asarray(C, dtype=np.float64)
    K = spec.n_communities
    if C.shape != (K, K):
        raise ValidationError(f"C must be {K}x{K}, got {C.shape}")
    R = spec.R
    Psi = spec.Psi if spec.Psi.ndim == 2 else spec.Psi.mean(axis=0)
    labels = spec.labels
    n = labels.size
    cross = np.einsum("mjk,mab->jkab", R, R) / R.shape[0]
    F = 2.0 * Psi * C
    for s in range(n):
        for t in range(s + 1, n):
            a, b = labels[s], labels[t]
            F = F + 2.0 * cross[:, :, a, b] * C[a, b]
    return F
