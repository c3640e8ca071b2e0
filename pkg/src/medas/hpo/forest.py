"""Regression-forest surrogate: tree-ensemble mean with across-tree variance."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .gp import DegenerateData

N_TREES = 100


@dataclass
class RegressionForest:
    model: RandomForestRegressor
    y_mean: float
    y_std: float
    degenerate: bool = False

    def normalize(self, y: float | np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def posterior(self, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and stddev across the 100 trees, normalized target units."""
        xq = np.atleast_2d(np.asarray(x_query, dtype=np.float64))
        if self.degenerate:
            return np.zeros(len(xq)), np.full(len(xq), 1e-3)
        per_tree = np.stack([est.predict(xq) for est in self.model.estimators_], axis=0)
        mu = per_tree.mean(axis=0)
        sd = per_tree.std(axis=0)
        return mu, np.maximum(sd, 1e-9)


def fit_forest(x: np.ndarray, y: np.ndarray, seed: int = 0) -> RegressionForest:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 2:
        raise ValueError("need at least 2 observations to fit a surrogate")
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        warnings.warn("all observations identical; constant-mean surrogate", DegenerateData)
        dummy = RandomForestRegressor(n_estimators=1, random_state=seed)
        dummy.fit(x, np.zeros(len(y)))
        return RegressionForest(model=dummy, y_mean=y_mean, y_std=1.0, degenerate=True)
    model = RandomForestRegressor(n_estimators=N_TREES, random_state=seed)
    model.fit(x, (y - y_mean) / y_std)
    return RegressionForest(model=model, y_mean=y_mean, y_std=y_std)
