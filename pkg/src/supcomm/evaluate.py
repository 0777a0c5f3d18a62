"""Cross-validation, prediction metrics, comparison baselines and benchmarks.

Every method is fit on a standardized training sample and evaluated on raw
held-out networks through the stored standardization, so training and test
data never share statistics.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.model_selection import KFold, StratifiedKFold

from .admm import AdmmConfig, admm_fit
from .core import (NetworkSample, ValidationError, apply_standardization, block_expand,
                   co_clustering_error, inner, standardize, vectorize_edges)
from .losses import EdgeDesign, LossSpec, PenaltySpec, fit_restricted, prox_solve
from .simulate import Sec5Design, generate_sec5
from .spectral import spectral_cluster, spectral_init

logger = logging.getLogger(__name__)

BLOCK_METHODS = ("oracle", "spectral", "admm")
LINEAR_METHODS = ("ridge", "lasso")
METHODS = BLOCK_METHODS + LINEAR_METHODS + ("unsupervised",)
METRICS = ("relative_mse", "accuracy")
VARY = {"sigma": "sigma", "t": "t", "n-samples": "N", "N": "N"}


# -- metrics -----------------------------------------------------------------

def relative_mse(y_true, y_pred):
    """``sum (y - yhat)^2 / (N * var(y))`` with the ``1/(N-1)`` sample variance.

    Predicting the mean of ``y_true`` therefore scores ``(N - 1) / N``.
    """
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    N = y_true.size
    if N < 2:
        raise ValidationError("relative MSE needs at least two responses")
    var = y_true.var(ddof=1)
    if not var > 0:
        raise ValidationError("responses have zero variance")
    return float(((y_true - y_pred) ** 2).sum() / (N * var))


def accuracy(y_true, y_pred):
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValidationError("accuracy needs equal-length, non-empty inputs")
    return float(np.mean(y_true == y_pred))


# -- fitted models -----------------------------------------------------------

@dataclass
class LinearNetworkModel:
    """A fitted linear predictor on standardized edges.

    ``reference`` is the standardized training sample; its statistics map
    raw networks into the space where ``B`` and ``intercept`` live.
    """

    B: np.ndarray
    intercept: float
    reference: NetworkSample
    labels: np.ndarray | None = None
    C: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def task(self):
        return self.reference.task

    def decision_function(self, A):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 2:
            A = A[None]
        X = apply_standardization(A, self.reference)
        return inner(X, self.B) + self.intercept + self.reference.response_mean

    def predict(self, A):
        s = self.decision_function(A)
        if self.task == "classification":
            return np.where(s >= 0, 1.0, -1.0)
        return s

    def score(self, A, y):
        """Relative MSE for regression, accuracy for classification."""
        if self.task == "classification":
            return accuracy(y, self.predict(A))
        return relative_mse(y, self.predict(A))


def default_loss(task):
    return LossSpec("least_squares" if task == "regression" else "logistic")


def default_gamma(loss: LossSpec):
    """Small ridge weight for logistic fits, none for least squares."""
    return 1e-5 if loss.kind == "logistic" else 0.0


def _block_model(std, labels, K, loss, penalty, info=None):
    C, b, fit_info = fit_restricted(std, labels, K, loss, penalty)
    info = dict(info or {})
    info["objective"] = fit_info["objective"]
    return LinearNetworkModel(block_expand(labels, C), b, std, labels, C, info)


def fit_method(method, sample: NetworkSample, n_communities=None, lam=0.0, loss=None,
               gamma=None, true_labels=None, admm_cfg: AdmmConfig | None = None, seed=0,
               init_labels=None, warm=None):
    """Fit one of :data:`METHODS` on a raw training sample.

    ``lam`` is the l1 weight for block methods and lasso, and the ridge
    weight for ``"ridge"``. ``warm`` may hold a previous model of the same
    method to warm-start iterative solvers.
    """
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    loss = loss or default_loss(sample.task)
    gamma = default_gamma(loss) if gamma is None else float(gamma)
    std = sample if sample.standardized else standardize(sample)
    K = None if n_communities is None else int(n_communities)
    if method == "oracle":
        if true_labels is None:
            raise ValidationError("the oracle method needs the true labels")
        # the true partition fixes K
        labels = np.asarray(true_labels)
        return _block_model(std, labels, int(labels.max()) + 1, loss, PenaltySpec(lam, gamma))
    if method in ("spectral", "admm", "unsupervised") and K is None:
        raise ValidationError(f"method {method!r} needs n_communities")
    if method == "unsupervised":
        labels = baseline_unsupervised(sample, K, seed=seed)
        return _block_model(std, labels, K, loss, PenaltySpec(lam, gamma))
    if method == "spectral":
        labels = (spectral_init(std, K, seed=seed) if init_labels is None
                  else np.asarray(init_labels))
        return _block_model(std, labels, K, loss, PenaltySpec(lam, gamma))
    if method == "admm":
        cfg = admm_cfg or AdmmConfig(seed=seed)
        fit = admm_fit(std, K, loss, PenaltySpec(lam, gamma), cfg, init_labels=init_labels)
        return LinearNetworkModel(fit.B, fit.intercept, std, fit.labels, fit.C,
                                  {"objective": fit.objective, "rho": fit.rho,
                                   "init_labels": fit.init_labels})
    return baseline_linear(std, method, lam, loss=loss, gamma=gamma, warm=warm)


# -- baselines -----------------------------------------------------------------

def squared_sum(A):
    """``sum_m (A_m^2 - diag(A_m^2))``."""
    A = np.asarray(A, dtype=np.float64)
    S = np.einsum("mij,mjk->ik", A, A)
    np.fill_diagonal(S, 0.0)
    return S


def baseline_unsupervised(sample: NetworkSample, n_communities, seed=0, n_init=20):
    """Spectral clustering of the summed squared networks; ignores responses."""
    return spectral_cluster(squared_sum(sample.adjacency), n_communities,
                            n_init=n_init, seed=seed)


def lambda_max(sample: NetworkSample, loss=None):
    """Smallest l1 weight whose lasso solution over edges is all zero."""
    std = sample if sample.standardized else standardize(sample)
    loss = loss or default_loss(std.task)
    X = 2.0 * vectorize_edges(std.adjacency)
    y = std.responses
    N = y.size
    if loss.kind == "least_squares":
        r = y - y.mean() if loss.fit_intercept else y
        g = X.T @ r / N
    else:
        p = np.clip((1 + y).sum() / (2 * N), 1e-12, 1 - 1e-12) if loss.fit_intercept else 0.5
        b = math.log(p / (1 - p))
        g = X.T @ (y / (1 + np.exp(y * b))) / N
    # edge feature 2A_uv with l1 weight 2 lam
    return float(np.abs(g).max() / 2.0)


def lambda_path(sample, kind="lasso", n_lambdas=50, ratio=1e-4, loss=None):
    """Decreasing log grid of ``n_lambdas`` values spanning a factor ``ratio``.

    Lasso starts at :func:`lambda_max`; ridge starts at a thousand times
    that value, since no finite ridge weight zeroes the fit.
    """
    top = lambda_max(sample, loss)
    if kind == "ridge":
        top *= 1e3
    if not top > 0:
        top = 1.0
    return np.geomspace(top, top * ratio, int(n_lambdas))


def baseline_linear(sample: NetworkSample, penalty, lam, loss=None, gamma=None, warm=None,
                    tol=1e-7, max_iter=5000):
    """Unstructured linear model over all edges, ridge or lasso.

    Ridge minimizes ``loss + lam / 2 ||B||_F^2`` (closed form for least
    squares); lasso minimizes ``loss + lam ||B||_1 + gamma / 2 ||B||_F^2``
    by proximal gradient, warm-started from ``warm`` if given.
    """
    if penalty not in LINEAR_METHODS:
        raise ValidationError(f"penalty must be one of {LINEAR_METHODS}, got {penalty!r}")
    std = sample if sample.standardized else standardize(sample)
    loss = loss or default_loss(std.task)
    gamma = default_gamma(loss) if gamma is None else float(gamma)
    if penalty == "ridge":
        if lam <= 0 and gamma <= 0:
            raise ValidationError("ridge needs a positive weight")
        spec = PenaltySpec(0.0, lam + gamma)
    else:
        spec = PenaltySpec(lam, gamma)
    design = EdgeDesign(std)
    B0 = None if warm is None else warm.B
    b0 = 0.0 if warm is None else warm.intercept
    B, res = prox_solve(std, loss, spec, B0=B0, b0=b0, method="auto", tol=tol,
                        max_iter=max_iter, design=design)
    return LinearNetworkModel(B, res.intercept, std, None, None,
                              {"penalty": penalty, "lam": lam, "n_iter": res.n_iter,
                               "objective": res.objective})


# -- cross-validation ------------------------------------------------------------

@dataclass(frozen=True)
class CvPlan:
    """Folds and grids for cross-validation.

    ``metric`` defaults to relative MSE for regression and accuracy for
    classification.
    """

    folds: int = 5
    k_grid: tuple = (4,)
    lambda_grid: tuple = (0.0,)
    seed: int = 0
    metric: str | None = None

    def __post_init__(self):
        if int(self.folds) < 2:
            raise ValidationError("need at least two folds")
        k_grid = tuple(int(k) for k in np.atleast_1d(self.k_grid))
        lam = tuple(float(x) for x in np.atleast_1d(self.lambda_grid))
        if not k_grid or not lam:
            raise ValidationError("grids must be non-empty")
        if any(k < 1 for k in k_grid) or any(x < 0 for x in lam):
            raise ValidationError("K must be positive and lambda non-negative")
        if self.metric is not None and self.metric not in METRICS:
            raise ValidationError(f"metric must be one of {METRICS}")
        object.__setattr__(self, "folds", int(self.folds))
        object.__setattr__(self, "k_grid", k_grid)
        object.__setattr__(self, "lambda_grid", lam)


def fold_indices(y, folds, seed=0, stratify=False):
    """Seeded ``(train, test)`` index pairs.

    Unstratified splits depend only on ``len(y)``, ``folds`` and ``seed``.
    """
    y = np.asarray(y)
    N = y.size
    if folds > N:
        raise ValidationError(f"{folds} folds for {N} samples")
    if stratify:
        _, counts = np.unique(y, return_counts=True)
        if counts.size < 2 or counts.min() < folds:
            raise ValidationError(
                f"cannot stratify {folds} folds: smallest class has {counts.min()} members")
        splitter = StratifiedKFold(folds, shuffle=True, random_state=seed)
        return list(splitter.split(np.zeros(N), y))
    splitter = KFold(folds, shuffle=True, random_state=seed)
    return list(splitter.split(np.zeros(N)))


@dataclass
class CvResult:
    best_k: int | None
    best_lambda: float
    curve: pd.DataFrame
    metric: str

    def to_dict(self):
        return {"best_k": self.best_k, "best_lambda": self.best_lambda, "metric": self.metric,
                "curve": self.curve.to_dict(orient="records")}


def _metric_for(sample, plan):
    if plan.metric is not None:
        return plan.metric
    return "accuracy" if sample.task == "classification" else "relative_mse"


def _score(model, test, metric):
    pred = model.predict(test.adjacency)
    if metric == "accuracy":
        return accuracy(test.responses, pred)
    return relative_mse(test.responses, pred)


def cross_validate(sample: NetworkSample, plan: CvPlan = CvPlan(), method="admm", loss=None,
                   gamma=None, true_labels=None, admm_cfg=None):
    """Grid search over ``(K, lambda)`` by K-fold cross-validation.

    Folds are stratified for classification. The selected point minimizes
    the mean held-out relative MSE (or maximizes accuracy); ties go to the
    smaller ``K``, then the larger ``lambda``. For ``ridge``, ``lasso`` and
    ``oracle`` the ``K`` grid is ignored and ``best_k`` is ``None``.
    """
    if sample.standardized:
        raise ValidationError("cross-validate a raw sample; folds are standardized separately")
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    metric = _metric_for(sample, plan)
    splits = fold_indices(sample.responses, plan.folds, plan.seed,
                          stratify=sample.task == "classification")
    k_grid = (None,) if method in LINEAR_METHODS + ("oracle",) else plan.k_grid
    lambdas = sorted(plan.lambda_grid, reverse=True)
    scores = {(k, lam): [] for k in k_grid for lam in lambdas}
    for tr, te in splits:
        train, test = sample.subset(tr), sample.subset(te)
        # the unsupervised baseline clusters raw networks
        fit_on = train if method == "unsupervised" else standardize(train)
        for k in k_grid:
            if k is not None and k > sample.n_nodes:
                raise ValidationError(f"K={k} exceeds the {sample.n_nodes} nodes")
            warm = None
            init = None
            for lam in lambdas:
                model = fit_method(method, fit_on, k, lam, loss, gamma, true_labels,
                                   admm_cfg, seed=plan.seed, init_labels=init, warm=warm)
                if method in ("spectral", "admm"):
                    # the initial partition does not depend on lambda
                    init = model.info.get("init_labels", model.labels)
                warm = model
                scores[(k, lam)].append(_score(model, test, metric))
    rows = []
    for (k, lam), vals in scores.items():
        vals = np.asarray(vals)
        rows.append({"k": k, "lambda": lam, "mean": float(vals.mean()),
                     "se": float(vals.std(ddof=1) / np.sqrt(vals.size)),
                     "folds": [float(v) for v in vals]})
    curve = pd.DataFrame(rows)
    sign = -1.0 if metric == "accuracy" else 1.0
    best = min(rows, key=lambda r: (sign * r["mean"], r["k"] or 0, -r["lambda"]))
    return CvResult(best["k"], best["lambda"], curve, metric)


def nested_cross_validate(sample: NetworkSample, plan: CvPlan = CvPlan(), outer_folds=10,
                          method="admm", loss=None, gamma=None, true_labels=None,
                          admm_cfg=None):
    """Outer-fold evaluation with ``(K, lambda)`` chosen by inner CV on each training part.

    Returns a DataFrame with one row per outer fold.
    """
    metric = _metric_for(sample, plan)
    splits = fold_indices(sample.responses, outer_folds, plan.seed,
                          stratify=sample.task == "classification")
    rows = []
    for f, (tr, te) in enumerate(splits):
        train, test = sample.subset(tr), sample.subset(te)
        inner_cv = cross_validate(train, plan, method, loss, gamma, true_labels, admm_cfg)
        model = fit_method(method, train, inner_cv.best_k, inner_cv.best_lambda, loss, gamma,
                           true_labels, admm_cfg, seed=plan.seed)
        rows.append({"fold": f, "k": inner_cv.best_k, "lambda": inner_cv.best_lambda,
                     metric: _score(model, test, metric)})
    return pd.DataFrame(rows)


# -- benchmark -------------------------------------------------------------------

BENCHMARK_COLUMNS = ["method", "param", "value", "replicate", "relative_mse", "coclust_error"]


@dataclass
class BenchmarkReport:
    """Per-replicate records and their per-(method, value) summary."""

    records: pd.DataFrame
    meta: dict = field(default_factory=dict)

    @property
    def summary(self):
        return summarize(self.records)

    def to_csv(self, path):
        self.records.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path, meta=None):
        return cls(pd.read_csv(path, float_precision="round_trip"), meta or {})


def summarize(records: pd.DataFrame):
    """Mean and standard error of both metrics per method and grid value."""
    g = records.groupby(["method", "param", "value"], sort=False)
    out = g.agg(replicates=("replicate", "nunique"),
                relative_mse_mean=("relative_mse", "mean"),
                relative_mse_se=("relative_mse", "sem"),
                coclust_error_mean=("coclust_error", "mean"),
                coclust_error_se=("coclust_error", "sem"))
    return out.reset_index()


def _replicate_seeds(seed, grid_index, replicate):
    ss = np.random.SeedSequence([int(seed), int(grid_index), int(replicate)])
    train, test, fit = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    return train, test, fit


def _run_replicate(design, methods, replicate, grid_index, param, value, seed, n_test,
                   k_grid, folds, n_lambdas, admm_cfg):
    train_seed, test_seed, fit_seed = _replicate_seeds(seed, grid_index, replicate)
    train, truth, _ = generate_sec5(Sec5Design(**{**design, "seed": train_seed}))
    test, _, _ = generate_sec5(Sec5Design(**{**design, "seed": test_seed, "N": n_test}))
    K = design["K"]
    std = standardize(train)
    cfg = AdmmConfig(**{**(admm_cfg or {}), "seed": fit_seed})
    rows = []
    init = {}

    def select_k(method):
        if not k_grid or len(k_grid) == 1:
            return k_grid[0] if k_grid else K
        plan = CvPlan(folds, k_grid, (0.0,), fit_seed)
        return cross_validate(train, plan, method, true_labels=truth, admm_cfg=cfg).best_k

    for method in methods:
        if method in LINEAR_METHODS:
            grid = lambda_path(std, method, n_lambdas)
            cv = cross_validate(train, CvPlan(folds, (1,), tuple(grid), fit_seed), method)
            model = fit_method(method, std, lam=cv.best_lambda)
        elif method == "oracle":
            model = fit_method("oracle", std, K, true_labels=truth)
        elif method == "unsupervised":
            model = fit_method("unsupervised", train, K, seed=fit_seed)
        else:
            k = select_k(method)
            if k not in init:
                init[k] = spectral_init(std, k, seed=fit_seed)
            model = fit_method(method, std, k, admm_cfg=cfg, seed=fit_seed,
                               init_labels=init[k])
        err = np.nan if model.labels is None else co_clustering_error(model.labels, truth)
        rows.append({"method": method, "param": param, "value": value,
                     "replicate": replicate,
                     "relative_mse": relative_mse(test.responses, model.predict(test.adjacency)),
                     "coclust_error": err})
    return rows


def benchmark_sweep(vary="t", grid=(0.0, 0.0125, 0.025, 0.05, 0.1), replicates=50,
                    methods=METHODS, seed=0, base: Sec5Design = Sec5Design(), n_test=500,
                    k_grid=None, folds=5, n_lambdas=50, admm_cfg=None, n_jobs=1):
    """Vary one of ``sigma``, ``t`` or ``N`` of the simulation design.

    Each replicate draws an independent training and test sample. Block
    methods use the true ``K`` unless ``k_grid`` is given, in which case it
    is chosen by CV; ridge and lasso pick ``lambda`` by CV over a
    :func:`lambda_path`. Replicates run in parallel with ``n_jobs`` and
    results do not depend on scheduling.
    """
    if vary not in VARY:
        raise ValidationError(f"vary must be one of {sorted(set(VARY))}, got {vary!r}")
    methods = tuple(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ValidationError(f"unknown method(s) {bad}; valid methods: {', '.join(METHODS)}")
    grid = [float(v) for v in grid]
    if not grid or int(replicates) < 1:
        raise ValidationError("need a non-empty grid and at least one replicate")
    field_name = VARY[vary]
    design = {k: getattr(base, k) for k in ("n", "K", "s", "t", "sigma", "N")}
    points = []
    for gi, value in enumerate(grid):
        d = dict(design)
        d[field_name] = int(value) if field_name == "N" else value
        Sec5Design(**d)  # validate before running
        points.append((gi, value, d))
    k_grid = None if k_grid is None else tuple(int(k) for k in k_grid)
    admm_cfg = None if admm_cfg is None else dict(admm_cfg)
    tasks = [delayed(_run_replicate)(d, methods, r, gi, field_name, value, seed, n_test,
                                     k_grid, folds, n_lambdas, admm_cfg)
             for gi, value, d in points for r in range(int(replicates))]
    results = Parallel(n_jobs=n_jobs)(tasks)
    records = pd.DataFrame([row for rows in results for row in rows], columns=BENCHMARK_COLUMNS)
    meta = {"vary": field_name, "grid": grid, "replicates": int(replicates), "seed": seed,
            "methods": list(methods), "base": design, "n_test": n_test,
            "k_grid": None if k_grid is None else list(k_grid), "folds": folds,
            "lambda_path": {"n_lambdas": n_lambdas, "ratio": 1e-4,
                            "lasso_top": "lambda_max", "ridge_top": "1e3 * lambda_max"}}
    return BenchmarkReport(records, meta)
