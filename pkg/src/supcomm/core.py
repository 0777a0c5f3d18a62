"""Network samples, block algebra and shared metrics.

Adjacency samples are stored as a dense ``(N, n, n)`` float64 array. Community
labels are 0-based integer arrays internally; label files on disk are 1-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

TASKS = ("regression", "classification")


class ValidationError(ValueError):
    """Raised when input data violates a structural requirement."""


@dataclass(frozen=True)
class NetworkSample:
    """A sample of ``N`` undirected weighted networks on ``n`` shared nodes.

    Attributes
    ----------
    adjacency : ndarray of shape (N, n, n)
        Symmetric matrices with zero diagonal.
    responses : ndarray of shape (N,)
        Real responses, or labels in {-1, +1} for classification.
    task : {"regression", "classification"}
    standardized : bool
        Whether :func:`standardize` has been applied.
    edge_means, edge_sds : ndarray of shape (n, n) or None
        Per-edge statistics recorded by :func:`standardize`.
    zero_variance : ndarray of shape (n, n) of bool or None
        Edges that were constant across the sample.
    response_mean : float
        Mean removed from the responses (regression only).
    """

    adjacency: np.ndarray
    responses: np.ndarray
    task: str = "regression"
    standardized: bool = False
    edge_means: np.ndarray | None = None
    edge_sds: np.ndarray | None = None
    zero_variance: np.ndarray | None = None
    response_mean: float = 0.0
    center_only: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.float64)
        y = np.asarray(self.responses, dtype=np.float64).ravel()
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValidationError(f"adjacency must have shape (N, n, n), got {A.shape}")
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}, got {self.task!r}")
        if y.shape[0] != A.shape[0]:
            raise ValidationError(
                f"{y.shape[0]} responses for {A.shape[0]} networks")
        if not np.all(np.isfinite(y)):
            raise ValidationError("responses must be finite")
        if not np.all(np.isfinite(A)):
            raise ValidationError("adjacency entries must be finite")
        check_adjacency(A)
        if self.task == "classification":
            y = as_signed_labels(y)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "responses", y)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[1]

    @property
    def n_samples(self) -> int:
        return self.adjacency.shape[0]

    def subset(self, index) -> "NetworkSample":
        """Rows ``index`` of the sample, keeping standardization metadata."""
        index = np.asarray(index)
        return replace(self, adjacency=self.adjacency[index],
                       responses=self.responses[index])


def check_adjacency(A):
    """Reject non-symmetric matrices or nonzero diagonals (exact comparison)."""
    A = np.asarray(A)
    if not np.array_equal(A, np.swapaxes(A, -1, -2)):
        raise ValidationError("adjacency matrices must be exactly symmetric")
    if np.any(np.diagonal(A, axis1=-2, axis2=-1) != 0):
        raise ValidationError("adjacency matrices must have a zero diagonal")


def as_signed_labels(y):
    """Map binary labels in {0, 1} or {-1, +1} to {-1, +1}."""
    y = np.asarray(y, dtype=np.float64).ravel()
    values = set(np.unique(y).tolist())
    if values <= {-1.0, 1.0}:
        return y
    if values <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    raise ValidationError(f"classification labels must be in {{0,1}} or {{-1,+1}}, got {sorted(values)}")


# -- membership helpers ----------------------------------------------------

def check_labels(labels, n_communities=None):
    """Validate a 0-based label vector and return ``(labels, K)``."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValidationError("labels must be one-dimensional")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValidationError("labels must be integers")
    labels = labels.astype(np.intp)
    if labels.size and labels.min() < 0:
        raise ValidationError("labels must be non-negative")
    K = int(labels.max()) + 1 if n_communities is None else int(n_communities)
    if labels.size and labels.max() >= K:
        raise ValidationError(f"label {labels.max()} out of range for K={K}")
    return labels, K


def membership_matrix(labels, n_communities=None):
    """Binary ``(n, K)`` indicator matrix with one 1 per row."""
    labels, K = check_labels(labels, n_communities)
    Z = np.zeros((labels.size, K))
    Z[np.arange(labels.size), labels] = 1.0
    return Z


def community_sizes(labels, n_communities=None):
    labels, K = check_labels(labels, n_communities)
    return np.bincount(labels, minlength=K)


def canonical_labels(labels):
    """Relabel communities in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.intp)


# -- block algebra ---------------------------------------------------------

def block_expand(labels, C):
    """Expand cell coefficients to the ``n x n`` matrix ``Z C Z^T``, zero diagonal."""
    C = np.asarray(C, dtype=np.float64)
    labels, K = check_labels(labels, C.shape[0])
    if C.ndim != 2 or C.shape != (K, K):
        raise ValidationError(f"C must be {K}x{K}, got {C.shape}")
    B = C[np.ix_(labels, labels)]
    np.fill_diagonal(B, 0.0)
    return B


def block_project(M, labels, n_communities=None):
    """Cell averages ``(Z^T Z)^{-1} Z^T M Z (Z^T Z)^{-1}``.

    Within-community cells average over all ``n_k**2`` entries, so a zero
    diagonal in ``M`` dilutes them by ``(n_k - 1) / n_k``. This is the literal
    matrix formula; expanding the result does not reproduce the within-cell
    values of a zero-diagonal block matrix.
    """
    M = np.asarray(M, dtype=np.float64)
    Z = membership_matrix(labels, n_communities)
    if M.shape != (Z.shape[0], Z.shape[0]):
        raise ValidationError(f"M must be {Z.shape[0]}x{Z.shape[0]}, got {M.shape}")
    sizes = Z.sum(axis=0)
    if np.any(sizes == 0):
        raise ValidationError(f"empty communities: {np.flatnonzero(sizes == 0).tolist()}")
    C = (Z.T @ M @ Z) / np.outer(sizes, sizes)
    return 0.5 * (C + C.T)


def block_project_offdiag(M, labels, n_communities=None):
    """Cell averages over off-diagonal entries only.

    This is the Frobenius projection onto zero-diagonal block-constant
    matrices. Singleton communities get a zero within-cell value.
    """
    M = np.asarray(M, dtype=np.float64)
    Z = membership_matrix(labels, n_communities)
    sizes = Z.sum(axis=0)
    if np.any(sizes == 0):
        raise ValidationError(f"empty communities: {np.flatnonzero(sizes == 0).tolist()}")
    M = M - np.diag(np.diag(M))
    counts = np.outer(sizes, sizes) - np.diag(sizes)
    with np.errstate(invalid="ignore", divide="ignore"):
        C = np.where(counts > 0, (Z.T @ M @ Z) / np.maximum(counts, 1), 0.0)
    return 0.5 * (C + C.T)


def cell_features(A, labels, n_communities=None):
    """``Z^T A Z`` for one matrix ``(n, n)`` or a stack ``(N, n, n)``."""
    A = np.asarray(A, dtype=np.float64)
    Z = membership_matrix(labels, n_communities)
    if A.shape[-1] != Z.shape[0] or A.shape[-2] != Z.shape[0]:
        raise ValidationError(f"adjacency of size {A.shape[-1]} vs {Z.shape[0]} labels")
    return Z.T @ A @ Z


def inner(A, B):
    """``<A^(m), B>`` for every network in a stack (or a single matrix)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[-2:] != B.shape:
        raise ValidationError(f"coefficient matrix {B.shape} does not match networks {A.shape[-2:]}")
    return np.tensordot(A, B, axes=([-2, -1], [0, 1]))


# -- edge vectorization ----------------------------------------------------

def edge_index(n):
    """Upper-triangle (u < v) indices in row-major order."""
    return np.triu_indices(n, k=1)


def vectorize_edges(A):
    """Upper-triangle entries of each network, shape ``(N, n(n-1)/2)``."""
    A = np.asarray(A, dtype=np.float64)
    iu = edge_index(A.shape[-1])
    return A[..., iu[0], iu[1]]


def unvectorize_edges(x, n):
    """Inverse of :func:`vectorize_edges` for a single vector."""
    B = np.zeros((n, n))
    iu = edge_index(n)
    B[iu] = x
    return B + B.T


# -- standardization -------------------------------------------------------

def standardize(sample: NetworkSample, center_only=False) -> NetworkSample:
    """Center each edge across the sample and scale it to unit mean square.

    After the transform ``(1/N) sum_m A_uv^(m) = 0`` and ``(1/N) sum_m
    (A_uv^(m))^2 = 1`` for every edge (the ``1/N`` variance convention).
    Regression responses are centered too. Zero-variance edges become
    constant-zero features and are flagged in ``zero_variance``.
    """
    A = sample.adjacency
    N = A.shape[0]
    if N < 2:
        raise ValidationError("standardization needs at least two networks")
    mu = A.mean(axis=0)
    centered = A - mu
    sd = centered.std(axis=0, ddof=0)
    zero_var = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    np.fill_diagonal(zero_var, False)
    if center_only:
        scale = np.ones_like(sd)
    else:
        scale = np.where(zero_var, 1.0, sd)
        np.fill_diagonal(scale, 1.0)
    X = centered / scale
    X[:, zero_var] = 0.0
    y = sample.responses
    y_mean = 0.0
    if sample.task == "regression":
        y_mean = float(y.mean())
        y = y - y_mean
    out = replace(sample, adjacency=X, responses=y)
    # compose with any earlier transform so prediction sees raw inputs
    if sample.standardized:
        mu = sample.edge_means + sample.edge_sds * mu
        scale = sample.edge_sds * scale
        zero_var = zero_var | sample.zero_variance
        y_mean += sample.response_mean
    return replace(out, standardized=True, edge_means=mu, edge_sds=scale,
                   zero_variance=zero_var, response_mean=y_mean,
                   center_only=center_only)


def apply_standardization(A, reference: NetworkSample):
    """Transform raw networks with the statistics stored on ``reference``."""
    A = np.asarray(A, dtype=np.float64)
    if not reference.standardized:
        return A
    if A.shape[-2:] != reference.edge_means.shape:
        raise ValidationError(
            f"networks have {A.shape[-1]} nodes, model expects {reference.edge_means.shape[0]}")
    X = (A - reference.edge_means) / reference.edge_sds
    X[..., reference.zero_variance] = 0.0
    return X


# -- prediction and metrics ------------------------------------------------

def linear_score(A, B, intercept=0.0):
    return inner(A, B) + intercept


def predict(A, B, intercept=0.0, task="regression"):
    """Predictions of the network linear model.

    Regression returns ``<A, B> + b``. Classification returns a pair
    ``(labels in {-1, +1}, probability of +1)``.
    """
    score = linear_score(A, B, intercept)
    if task == "regression":
        return score
    if task != "classification":
        raise ValidationError(f"unknown task {task!r}")
    prob = 0.5 * (1.0 + np.tanh(0.5 * score))
    return np.where(score >= 0, 1.0, -1.0), prob


def co_clustering_error(labels_a, labels_b):
    """Fraction of ordered node pairs on which two partitions disagree.

    Computes ``(1/n^2) sum_ij |(Z Z^T - Z' Z'^T)_ij|``; invariant to
    relabeling and to the number of communities.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"label vectors of lengths {a.size} and {b.size}")
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    return float(np.count_nonzero(same_a != same_b)) / a.size ** 2


# -- on-disk format ----------------------------------------------------------
#
# A sample directory holds ``manifest.json`` with fields n, N, task,
# networks (list of CSV paths) and responses (CSV path); paths are relative
# to the manifest. Matrices are dense CSV written with 17 significant digits
# so values round-trip exactly.

CSV_FORMAT = "%.17g"


def write_matrix(path, M):
    M = np.asarray(M, dtype=np.float64)
    np.savetxt(path, M if M.ndim == 2 else M.reshape(-1, 1), fmt=CSV_FORMAT, delimiter=",")


def read_matrix(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}")
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc


def write_labels(path, labels):
    """Write 0-based labels as a 1-based single-column CSV."""
    labels = np.asarray(labels, dtype=np.intp)
    np.savetxt(path, labels + 1, fmt="%d")


def read_labels(path):
    """Read a 1-based label column and return 0-based labels."""
    raw = read_matrix(path)
    if raw.shape[1] != 1:
        raise ValidationError(f"{path}: expected one label per row")
    raw = raw[:, 0]
    if not np.all(raw == np.round(raw)) or raw.min(initial=1) < 1:
        raise ValidationError(f"{path}: labels must be positive integers")
    return raw.astype(np.intp) - 1


def save_sample(sample: NetworkSample, directory, name="manifest.json"):
    """Write ``sample`` as a manifest plus one CSV per network; returns the manifest path."""
    directory = Path(directory)
    (directory / "networks").mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(sample.n_samples)))
    paths = []
    for m, A in enumerate(sample.adjacency):
        rel = f"networks/network_{m + 1:0{width}d}.csv"
        write_matrix(directory / rel, A)
        paths.append(rel)
    write_matrix(directory / "responses.csv", sample.responses)
    manifest = {"n": sample.n_nodes, "N": sample.n_samples, "task": sample.task,
                "networks": paths, "responses": "responses.csv"}
    target = directory / name
    target.write_text(json.dumps(manifest, indent=2) + "\n")
    return target


def load_sample(manifest_path, require_responses=True) -> NetworkSample:
    """Read a sample written by :func:`save_sample`, validating shapes exactly.

    With ``require_responses=False`` a manifest without responses loads with
    zero placeholder responses (useful for prediction).
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ValidationError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{manifest_path}: invalid JSON ({exc})") from exc
    missing = {"n", "N", "networks"} - set(manifest)
    if missing:
        raise ValidationError(f"{manifest_path}: missing fields {sorted(missing)}")
    root = manifest_path.parent
    n, N = int(manifest["n"]), int(manifest["N"])
    if len(manifest["networks"]) != N:
        raise ValidationError(
            f"{manifest_path}: N={N} but {len(manifest['networks'])} network files")
    A = np.empty((N, n, n))
    for m, rel in enumerate(manifest["networks"]):
        M = read_matrix(root / rel)
        if M.shape != (n, n):
            raise ValidationError(f"{root / rel}: expected {n}x{n}, got {M.shape}")
        A[m] = M
    task = manifest.get("task", "regression")
    if manifest.get("responses") is not None:
        y = read_matrix(root / manifest["responses"])
        if y.shape != (N, 1):
            raise ValidationError(
                f"{root / manifest['responses']}: expected {N} responses, got shape {y.shape}")
        y = y[:, 0]
    elif require_responses:
        raise ValidationError(f"{manifest_path}: no responses listed")
    else:
        y = np.ones(N) if task == "classification" else np.zeros(N)
    return NetworkSample(A, y, task=task, meta={"manifest": str(manifest_path)})
