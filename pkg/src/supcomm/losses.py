"""Losses, elastic-net penalty, and the solvers built on them.

Everything is parameterized over the upper triangle ``u < v`` of ``B``. Since
``<A, B> = 2 sum_{u<v} A_uv B_uv`` and both triangles enter the penalty, an
edge coefficient ``beta_uv = B_uv`` sees the feature ``2 A_uv``, an l1 weight
``2 lam`` and an l2 weight ``2 gamma``. Symmetry and the zero diagonal then
hold by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.special import expit

from .core import (NetworkSample, ValidationError, cell_features, community_sizes,
                   check_labels, inner, unvectorize_edges, vectorize_edges)

LOSS_KINDS = ("least_squares", "logistic")


class SolverError(RuntimeError):
    """Raised when an optimizer diverges or a system is singular."""


@dataclass(frozen=True)
class LossSpec:
    kind: str = "least_squares"
    fit_intercept: bool = True

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"loss must be one of {LOSS_KINDS}, got {self.kind!r}")

    @property
    def task(self):
        return "regression" if self.kind == "least_squares" else "classification"


@dataclass(frozen=True)
class PenaltySpec:
    """Elastic net ``lam * sum_ij |B_ij| + gamma / 2 * ||B||_F^2``."""

    lam: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.lam >= 0 and self.gamma >= 0):
            raise ValidationError("penalty weights must be non-negative")

    def value(self, B):
        return self.lam * np.abs(B).sum() + 0.5 * self.gamma * (B * B).sum()


def _check_loss(loss, y):
    if loss.kind == "logistic" and not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("logistic loss needs labels in {-1, +1}")


# -- scalar losses on linear scores ----------------------------------------

def _loss_from_scores(kind, y, s):
    """Mean loss and its derivative with respect to each score."""
    N = y.shape[0]
    if N == 0:
        return 0.0, np.zeros(0)
    if kind == "least_squares":
        r = s - y
        return 0.5 * float(r @ r) / N, r / N
    margin = y * s
    value = float(np.logaddexp(0.0, -margin).sum()) / N
    return value, -y * expit(-margin) / N


def soft_threshold(x, t):
    """Entrywise ``sign(x) * max(|x| - t, 0)``."""
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


# -- loss on the full coefficient matrix -----------------------------------

def loss_value_grad(B, b, sample: NetworkSample, loss: LossSpec):
    """Loss at ``(B, b)`` with gradients over the matrix ``B`` and over ``b``.

    Least squares is ``(1/2N) sum (Y - <A, B> - b)^2`` and logistic is
    ``(1/N) sum log(1 + exp(-Y (<A, B> + b)))``. The gradient over ``B``
    treats every entry as a free variable; it is symmetric with zero
    diagonal whenever the networks are.
    """
    _check_loss(loss, sample.responses)
    s = inner(sample.adjacency, B) + b
    if not np.all(np.isfinite(s)):
        raise SolverError("non-finite linear score; check coefficient magnitudes")
    value, ds = _loss_from_scores(loss.kind, sample.responses, s)
    grad_B = np.tensordot(ds, sample.adjacency, axes=(0, 0))
    return value, grad_B, float(ds.sum())


def objective(B, b, sample, loss, penalty):
    """Penalized objective ``loss(B, b) + penalty(B)``."""
    value, _, _ = loss_value_grad(B, b, sample, loss)
    return value + penalty.value(B)


# -- generic penalized linear model ----------------------------------------

@dataclass
class ProxResult:
    coef: np.ndarray
    intercept: float
    objective: float
    n_iter: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)


def _lipschitz(X, fit_intercept, n_power=20, seed=0):
    """Power-iteration estimate of ``||[X, 1]||_2^2 / N``."""
    N, d = X.shape
    if N == 0:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(d + int(fit_intercept))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(n_power):
        s = X @ v[:d] + (v[d] if fit_intercept else 0.0)
        w = np.empty_like(v)
        w[:d] = X.T @ s
        if fit_intercept:
            w[d] = s.sum()
        est = np.linalg.norm(w)
        if est == 0:
            return 0.0
        v = w / est
    return est / N


def fista(X, y, kind="least_squares", l1=0.0, l2=0.0, center=0.0, coef=None,
          intercept=0.0, fit_intercept=True, tol=1e-9, max_iter=5000, step=None,
          record_trace=False):
    """Accelerated proximal gradient for a penalized linear model.

    Minimizes ``mean loss(y, X coef + b) + sum(l1 * |coef|)
    + 0.5 * sum(l2 * (coef - center)^2)`` with ``b`` unpenalized. Uses
    backtracking (halving the step until the quadratic upper bound holds)
    and restarts momentum whenever the objective would increase beyond
    rounding. Stops when the proximal gradient step moves no coordinate
    (intercept included) by more than ``tol`` relative to the iterate size.
    The objective is too flat near the optimum to serve as the stopping
    signal: it settles to rounding while coefficients are still ~sqrt(eps)
    away.
    """
    X = np.asarray(X, dtype=np.float64)
    N, d = X.shape
    l1 = np.broadcast_to(np.asarray(l1, dtype=np.float64), (d,))
    l2 = np.broadcast_to(np.asarray(l2, dtype=np.float64), (d,))
    center = np.broadcast_to(np.asarray(center, dtype=np.float64), (d,))
    x = np.zeros(d) if coef is None else np.array(coef, dtype=np.float64)
    bx = float(intercept) if fit_intercept else 0.0

    def smooth(theta, b, s):
        value, ds = _loss_from_scores(kind, y, s)
        diff = theta - center
        value += 0.5 * float(l2 @ (diff * diff))
        return value, X.T @ ds + l2 * diff, float(ds.sum())

    if step is None:
        curv = 1.0 if kind == "least_squares" else 0.25
        L = curv * _lipschitz(X, fit_intercept) + float(l2.max(initial=0.0))
        step = 1.0 / L if L > 0 else 1.0

    sx = X @ x + bx
    fx, _, _ = smooth(x, bx, sx)
    Fx = fx + float(l1 @ np.abs(x))
    trace = [Fx] if record_trace else []
    z, bz, sz = x, bx, sx
    t = 1.0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        fz, gz, gbz = smooth(z, bz, sz)
        while True:
            x_new = soft_threshold(z - step * gz, step * l1)
            b_new = bz - step * gbz if fit_intercept else 0.0
            s_new = X @ x_new + b_new
            f_new, _, _ = smooth(x_new, b_new, s_new)
            if not np.isfinite(f_new):
                raise SolverError(f"objective diverged at step size {step:.3e}")
            dx = x_new - z
            db = b_new - bz
            bound = fz + float(gz @ dx) + gbz * db + (float(dx @ dx) + db * db) / (2 * step)
            if f_new <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            step *= 0.5
            if step < 1e-300:
                raise SolverError("backtracking failed to find a valid step size")
        F_new = f_new + float(l1 @ np.abs(x_new))
        slack = 1e-13 * max(1.0, abs(Fx))
        if F_new > Fx + slack:
            if t == 1.0:
                # a plain step cannot increase the objective; only rounding can
                break
            z, bz, sz, t = x, bx, sx, 1.0
            continue
        move = max(float(np.abs(dx).max(initial=0.0)), abs(db))
        size = max(1.0, float(np.abs(x_new).max(initial=0.0)), abs(b_new))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        z = x_new + mom * (x_new - x)
        bz = b_new + mom * (b_new - bx)
        sz = s_new + mom * (s_new - sx)
        x, bx, sx, Fx = x_new, b_new, s_new, min(Fx, F_new)
        t = t_new
        if record_trace:
            trace.append(Fx)
        if move <= tol * size:
            converged = True
            break
    return ProxResult(x, float(bx), Fx, it, converged, trace)


def ridge_solve(X, y, l2, center=0.0, fit_intercept=True):
    """Closed-form least squares with an offset ridge term.

    Minimizes ``(1/2N) ||y - X coef - b||^2 + 0.5 * sum(l2 * (coef - center)^2)``.
    """
    X = np.asarray(X, dtype=np.float64)
    N, d = X.shape
    l2 = np.broadcast_to(np.asarray(l2, dtype=np.float64), (d,))
    center = np.broadcast_to(np.asarray(center, dtype=np.float64), (d,))
    if fit_intercept:
        xm, ym = X.mean(0), y.mean()
    else:
        xm, ym = np.zeros(d), 0.0
    Xc = X - xm
    r = (y - ym) - Xc @ center
    G = Xc.T @ Xc / N + np.diag(l2)
    try:
        delta = sla.solve(G, Xc.T @ r / N, assume_a="pos")
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SolverError("singular normal equations; set gamma > 0") from exc
    coef = center + delta
    return coef, float(ym - xm @ coef)


# -- edge-level problems -----------------------------------------------------

class EdgeDesign:
    """Vectorized edge features of a sample with cached factorizations.

    Columns are ``2 * A_uv`` for ``u < v`` so that ``X @ beta = <A, B>``.
    """

    def __init__(self, sample: NetworkSample):
        self.sample = sample
        self.n = sample.n_nodes
        self.X = 2.0 * vectorize_edges(sample.adjacency)
        self.y = sample.responses
        self._xm = self.X.mean(0) if self.X.shape[0] else np.zeros(self.X.shape[1])
        self._Xc = self.X - self._xm
        self._gram = None
        self._chol = {}
        self._lipschitz = None

    def lipschitz(self, fit_intercept=True):
        if self._lipschitz is None:
            self._lipschitz = _lipschitz(self.X, fit_intercept)
        return self._lipschitz

    def ridge_offset(self, alpha, center, fit_intercept=True):
        """Closed form of ``(1/2N)||y - X beta - b||^2 + alpha/2 ||beta - center||^2``.

        Solved in the dual (``N x N``) when there are more edges than networks.
        """
        N, p = self.X.shape
        if alpha <= 0:
            return ridge_solve(self.X, self.y, alpha, center, fit_intercept)
        if fit_intercept:
            Xc, xm, ym = self._Xc, self._xm, self.y.mean()
        else:
            Xc, xm, ym = self.X, np.zeros(p), 0.0
        r = (self.y - ym) - Xc @ center
        key = (float(alpha), bool(fit_intercept))
        if key not in self._chol:
            if p >= N:
                if self._gram is None or self._gram[0] != fit_intercept:
                    self._gram = (fit_intercept, Xc @ Xc.T)
                K = self._gram[1] + N * alpha * np.eye(N)
            else:
                K = Xc.T @ Xc + N * alpha * np.eye(p)
            self._chol[key] = sla.cho_factor(K)
        factor = self._chol[key]
        if p >= N:
            delta = Xc.T @ sla.cho_solve(factor, r)
        else:
            delta = sla.cho_solve(factor, Xc.T @ r)
        beta = center + delta
        return beta, float(ym - xm @ beta)


def _edge_terms(n, penalty, U, rho):
    """l1 weight, l2 weight and centre of the per-edge problem."""
    alpha = penalty.gamma + rho
    if U is None or rho == 0:
        center = 0.0
    else:
        iu = np.triu_indices(n, k=1)
        center = (rho / alpha) * np.asarray(U, dtype=np.float64)[iu]
    return 2.0 * penalty.lam, 2.0 * alpha, center


def prox_solve(sample, loss: LossSpec, penalty: PenaltySpec, U=None, rho=0.0,
               B0=None, b0=0.0, method="fista", tol=1e-9, max_iter=5000,
               design: EdgeDesign | None = None, record_trace=False):
    """Solve the penalized B-step over symmetric zero-diagonal matrices.

    Minimizes ``loss(B, b) + lam ||B||_1
    + ((gamma + rho) / 2) ||B - rho / (gamma + rho) U||_F^2``, which equals
    the elastic-net objective plus ``rho/2 ||B - U||_F^2`` up to a constant.

    ``method="fista"`` runs :func:`fista`; ``method="direct"`` solves the
    least-squares, ``lam = 0`` case as ridge regression with an offset;
    ``method="auto"`` picks ``direct`` whenever that applies.

    Returns
    -------
    B : ndarray of shape (n, n)
    result : ProxResult
        Solver diagnostics; ``result.coef`` holds the upper-triangle vector.
    """
    if rho < 0:
        raise ValidationError("rho must be non-negative")
    design = design or EdgeDesign(sample)
    _check_loss(loss, design.y)
    n = design.n
    l1, l2, center = _edge_terms(n, penalty, U, rho)
    if method == "auto":
        method = "direct" if loss.kind == "least_squares" and penalty.lam == 0 else "fista"
    if method == "direct":
        if loss.kind != "least_squares" or penalty.lam != 0:
            raise ValidationError("direct solve needs least squares with lam = 0")
        if l2 == 0 and design.X.shape[1] >= design.X.shape[0]:
            raise SolverError("underdetermined problem; set gamma > 0 or rho > 0")
        beta, b = design.ridge_offset(l2, np.broadcast_to(center, (design.X.shape[1],)),
                                      loss.fit_intercept)
        s = design.X @ beta + b
        value, _ = _loss_from_scores(loss.kind, design.y, s)
        diff = beta - center
        value += 0.5 * l2 * float(diff @ diff)
        result = ProxResult(beta, b, value, 1, True)
    elif method == "fista":
        coef = None if B0 is None else np.asarray(B0)[np.triu_indices(n, k=1)]
        curv = 1.0 if loss.kind == "least_squares" else 0.25
        L = curv * design.lipschitz(loss.fit_intercept) + l2
        if design.X.shape[0] == 0:
            L = l2
        step = 1.0 / L if L > 0 else 1.0
        result = fista(design.X, design.y, loss.kind, l1, l2, center, coef, b0,
                       loss.fit_intercept, tol=tol, max_iter=max_iter, step=step,
                       record_trace=record_trace)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return unvectorize_edges(result.coef, n), result


def kkt_check(B, b, sample, loss, penalty, U=None, rho=0.0):
    """Largest violation of the B-step optimality conditions.

    Per edge, with ``g`` the matrix gradient of the smooth part: ``|g + lam
    sign(B_uv)|`` where ``B_uv != 0`` and ``max(|g| - lam, 0)`` otherwise.
    The intercept contributes ``|d loss / d b|`` when it is fitted.
    """
    _, G, gb = loss_value_grad(B, b, sample, loss)
    alpha = penalty.gamma + rho
    target = 0.0 if U is None or rho == 0 else (rho / alpha) * np.asarray(U)
    G = G + alpha * (B - target)
    iu = np.triu_indices(B.shape[0], k=1)
    g, beta = G[iu], np.asarray(B)[iu]
    lam = penalty.lam
    viol = np.where(beta != 0, np.abs(g + lam * np.sign(beta)),
                    np.maximum(np.abs(g) - lam, 0.0))
    worst = float(viol.max(initial=0.0))
    if loss.fit_intercept:
        worst = max(worst, abs(gb))
    return worst


# -- restricted (fixed partition) fit ------------------------------------

def cell_design(A, labels, n_communities):
    """Cell-level design for a fixed partition.

    Returns ``(F, weights, pairs)``: ``F[m, q]`` is ``(Z^T A Z)_jj`` for a
    diagonal cell and ``2 (Z^T A Z)_jk`` for ``j < k``, so ``F @ theta``
    equals ``<A, Z C Z^T>``; ``weights[q]`` counts the entries of ``B`` in
    cell ``q``.
    """
    labels, K = check_labels(labels, n_communities)
    feats = cell_features(A, labels, K)
    ju, ku = np.triu_indices(K)
    mult = np.where(ju == ku, 1.0, 2.0)
    F = feats[..., ju, ku] * mult
    sizes = community_sizes(labels, K).astype(float)
    weights = np.where(ju == ku, sizes[ju] * (sizes[ju] - 1), 2.0 * sizes[ju] * sizes[ku])
    return F, weights, (ju, ku)


def _theta_to_C(theta, pairs, K):
    C = np.zeros((K, K))
    C[pairs] = theta
    C[pairs[1], pairs[0]] = theta
    return C


def fit_restricted(sample, labels, n_communities=None, loss=LossSpec(),
                   penalty=PenaltySpec(), method="auto", tol=1e-10, max_iter=20000):
    """Best cell-constant coefficients ``C`` (and intercept) for a fixed partition.

    The penalty applies to ``Z C Z^T``, so a cell's coefficient is weighted
    by the number of matrix entries it covers. Cells with no edges (the
    within-cell of a singleton community) are fixed at zero.

    Returns
    -------
    C : ndarray of shape (K, K)
    intercept : float
    info : dict
        ``objective`` and solver details.
    """
    labels, K = check_labels(labels, n_communities)
    if labels.size != sample.n_nodes:
        raise ValidationError(f"{labels.size} labels for {sample.n_nodes} nodes")
    _check_loss(loss, sample.responses)
    F, w, pairs = cell_design(sample.adjacency, labels, K)
    keep = w > 0
    theta = np.zeros(F.shape[1])
    Fk, wk = F[:, keep], w[keep]
    if method == "auto":
        method = "direct" if loss.kind == "least_squares" and penalty.lam == 0 else "fista"
    info = {"method": method}
    if method == "direct":
        if loss.kind != "least_squares" or penalty.lam != 0:
            raise ValidationError("direct solve needs least squares with lam = 0")
        if penalty.gamma == 0 and Fk.shape[1]:
            Fc = Fk - Fk.mean(0) if loss.fit_intercept else Fk
            if np.linalg.matrix_rank(Fc) < Fk.shape[1]:
                raise SolverError(
                    "singular normal equations for the restricted fit; set gamma > 0")
        coef, b = ridge_solve(Fk, sample.responses, penalty.gamma * wk,
                              fit_intercept=loss.fit_intercept)
    else:
        curv = 1.0 if loss.kind == "least_squares" else 0.25
        L = curv * _lipschitz(Fk, loss.fit_intercept) + penalty.gamma * wk.max(initial=0.0)
        res = fista(Fk, sample.responses, loss.kind, penalty.lam * wk, penalty.gamma * wk,
                    0.0, None, 0.0, loss.fit_intercept, tol=tol, max_iter=max_iter,
                    step=1.0 / L if L > 0 else 1.0)
        coef, b = res.coef, res.intercept
        info.update(n_iter=res.n_iter, converged=res.converged)
    theta[keep] = coef
    C = _theta_to_C(theta, pairs, K)
    if not loss.fit_intercept:
        b = 0.0
    B = C[np.ix_(labels, labels)]
    np.fill_diagonal(B, 0.0)
    info["objective"] = objective(B, b, sample, loss, penalty)
    return C, float(b), info
