"""Supervised community detection for prediction from samples of networks.

Edge coefficients of a network linear model are constrained to be constant
within blocks defined by a node partition, and the partition is learned to
predict the response.
"""
__version__ = "0.1.0"

from .admm import AdmmConfig, FitResult, admm_fit
from .core import (NetworkSample, ValidationError, block_expand, block_project,
                   co_clustering_error, load_sample, save_sample, standardize)
from .estimator import SupervisedCommunityClassifier, SupervisedCommunityRegressor
from .evaluate import (CvPlan, baseline_linear, baseline_unsupervised, benchmark_sweep,
                       cross_validate, relative_mse)
from .losses import LossSpec, PenaltySpec, SolverError, fit_restricted, prox_solve
from .simulate import Sec5Design, SgsbmSpec, generate_sec5, generate_sgsbm
from .spectral import sigma_ay, spectral_init

__all__ = [
    "AdmmConfig", "CvPlan", "FitResult", "LossSpec", "NetworkSample", "PenaltySpec",
    "Sec5Design", "SgsbmSpec", "SolverError", "SupervisedCommunityClassifier",
    "SupervisedCommunityRegressor", "ValidationError", "admm_fit", "baseline_linear",
    "baseline_unsupervised", "benchmark_sweep", "block_expand", "block_project",
    "co_clustering_error", "cross_validate", "fit_restricted", "generate_sec5",
    "generate_sgsbm", "load_sample", "prox_solve", "relative_mse", "save_sample",
    "sigma_ay", "spectral_init", "standardize",
]
