"""scikit-learn style estimators for supervised community detection.

``X`` is a stack of adjacency matrices with shape ``(n_samples, n_nodes,
n_nodes)``. Fitted coefficients live in the standardized edge space; the
estimators standardize new networks with the training statistics.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .admm import AdmmConfig
from .core import NetworkSample, ValidationError, check_labels, standardize
from .evaluate import fit_method
from .losses import LossSpec


def check_networks(X, n_nodes=None):
    """Validate a stack of adjacency matrices and return it as float64.

    A single ``(n, n)`` matrix is promoted to a stack of one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValidationError(f"X must have shape (n_samples, n_nodes, n_nodes), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains NaN or infinite values")
    if n_nodes is not None and X.shape[1] != n_nodes:
        raise ValidationError(f"X has {X.shape[1]} nodes, estimator was fit with {n_nodes}")
    return X


class _SupervisedCommunityBase(BaseEstimator):
    _loss_kind = "least_squares"
    _task = "regression"

    def __init__(self, n_communities=4, lam=0.0, gamma=None, rho_grid=(0.1, 1.0, 10.0, 100.0),
                 tol=1e-4, max_iter=200, n_init=20, init="spectral", use_admm=True,
                 fit_intercept=True, random_state=0):
        self.n_communities = n_communities
        self.lam = lam
        self.gamma = gamma
        self.rho_grid = rho_grid
        self.tol = tol
        self.max_iter = max_iter
        self.n_init = n_init
        self.init = init
        self.use_admm = use_admm
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _prepare_y(self, y):
        return np.asarray(y, dtype=np.float64).ravel()

    def fit(self, X, y):
        """Fit communities and block coefficients.

        ``init`` is ``"spectral"`` or an array of initial 0-based labels;
        with ``use_admm=False`` the initial partition is kept and only the
        coefficients are fit.
        """
        X = check_networks(X)
        y = self._prepare_y(y)
        if y.size != X.shape[0]:
            raise ValidationError(f"{y.size} responses for {X.shape[0]} networks")
        K = int(self.n_communities)
        if not 1 <= K <= X.shape[1]:
            raise ValidationError(f"n_communities must be in [1, {X.shape[1]}], got {K}")
        std = standardize(NetworkSample(X, y, task=self._task))
        loss = LossSpec(self._loss_kind, self.fit_intercept)
        seed = self.random_state
        init = None
        if not (isinstance(self.init, str) and self.init == "spectral"):
            init, _ = check_labels(self.init, K)
            if init.size != X.shape[1]:
                raise ValidationError(f"{init.size} initial labels for {X.shape[1]} nodes")
        cfg = AdmmConfig(rho_grid=tuple(self.rho_grid), tol=self.tol, max_iter=self.max_iter,
                         n_init=self.n_init, seed=seed)
        method = "admm" if self.use_admm else "spectral"
        model = fit_method(method, std, K, self.lam, loss, self.gamma, admm_cfg=cfg,
                           seed=seed, init_labels=init)
        self.model_ = model
        self.labels_ = model.labels
        self.C_ = model.C
        self.B_ = model.B
        self.intercept_ = model.intercept
        self.n_nodes_ = X.shape[1]
        self.rho_ = model.info.get("rho")
        self.objective_ = model.info.get("objective")
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_networks(X, self.n_nodes_))


class SupervisedCommunityRegressor(RegressorMixin, _SupervisedCommunityBase):
    """Least-squares network regression with block-constant coefficients.

    Parameters
    ----------
    n_communities : int
        Number of node communities ``K``.
    lam, gamma : float
        Elastic-net weights on the coefficient matrix; ``gamma=None`` means 0.
    rho_grid, tol, max_iter : ADMM settings.
    n_init : int
        k-means restarts in the spectral steps.
    init : "spectral" or array-like of int
    use_admm : bool
        Refine the initial partition by ADMM.
    fit_intercept : bool
    random_state : int or None

    Attributes
    ----------
    labels_ : ndarray of shape (n_nodes,)
    C_ : ndarray of shape (K, K)
    B_ : ndarray of shape (n_nodes, n_nodes)
    intercept_ : float
    """

    def predict(self, X):
        return self.decision_function(X)


class SupervisedCommunityClassifier(ClassifierMixin, _SupervisedCommunityBase):
    """Logistic network classifier with block-constant coefficients.

    Takes the same parameters as :class:`SupervisedCommunityRegressor`;
    ``gamma=None`` means a small ridge weight of ``1e-5``. ``y`` must have
    exactly two classes; ``classes_[1]`` is the positive class.
    """

    _loss_kind = "logistic"
    _task = "classification"

    def _prepare_y(self, y):
        y = np.asarray(y).ravel()
        classes = np.unique(y)
        if classes.size != 2:
            raise ValidationError(f"need exactly two classes, got {classes.size}")
        self.classes_ = classes
        return np.where(y == classes[1], 1.0, -1.0)

    def predict_proba(self, X):
        s = self.decision_function(X)
        p = 0.5 * (1.0 + np.tanh(0.5 * s))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        s = self.decision_function(X)
        return self.classes_[(s >= 0).astype(int)]
