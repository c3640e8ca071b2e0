"""Bayesian hyper-parameter optimization: spaces, surrogates, ask/tell studies."""

from .forest import RegressionForest, fit_forest
from .gp import DegenerateData, GaussianProcess, fit_gp, log_marginal_likelihood, matern52
from .space import CategoricalDim, ContinuousDim, Dim, IntegerDim, OutOfBounds, SearchSpace
from .study import (
    Acquisition,
    NonFiniteObjective,
    Study,
    StudyClosed,
    StudyError,
    Trial,
    TrialState,
    UnknownTrial,
    acquisition_values,
    expected_improvement,
    optimize,
    upper_confidence_bound,
)

__all__ = [
    "Acquisition",
    "CategoricalDim",
    "ContinuousDim",
    "DegenerateData",
    "Dim",
    "GaussianProcess",
    "IntegerDim",
    "NonFiniteObjective",
    "OutOfBounds",
    "RegressionForest",
    "SearchSpace",
    "Study",
    "StudyClosed",
    "StudyError",
    "Trial",
    "TrialState",
    "UnknownTrial",
    "acquisition_values",
    "expected_improvement",
    "fit_forest",
    "fit_gp",
    "log_marginal_likelihood",
    "matern52",
    "optimize",
    "upper_confidence_bound",
]
