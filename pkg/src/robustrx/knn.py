"""K-nearest-neighbor outcome prediction under a coefficient-weighted metric.

The distance between two feature vectors is sum_j w_j (x_j - x'_j)^2 with
w_j the squared regression coefficient of feature j, so neighbors agree on
the features that predict the outcome. Search is an exact linear scan;
ties in distance are broken by position in the reference group.
"""
from dataclasses import dataclass
import math

import numpy as np

from .cv import kfold_indices
from .errors import DegeneratePairs, ShapeMismatch

DEFAULT_K_GRID = (1, 2, 3, 5, 8, 13, 21, 34)
_CHUNK = 256


def weighted_distance(x, xi, weights):
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not (x.shape == xi.shape == weights.shape):
        raise ShapeMismatch(f"shapes differ: {x.shape}, {xi.shape}, {weights.shape}")
    d = x - xi
    return float(np.sum(weights * d * d))


def pairwise_distances(Q, R, weights):
    """Weighted squared distances between rows of ``Q`` and rows of ``R``.

    Accumulated feature by feature from explicit differences, so equal
    points are at distance exactly zero.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    D = np.zeros((Q.shape[0], R.shape[0]))
    for j, w in enumerate(weights):
        if w == 0:
            continue
        diff = Q[:, j, None] - R[None, :, j]
        D += w * diff * diff
    return D


def nearest_indices(Q, R, weights, k):
    """Indices of the ``k`` nearest reference rows for every query row.

    Order is by (distance, reference index), which makes results exactly
    reproducible.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    out = np.empty((Q.shape[0], k), dtype=int)
    for start in range(0, Q.shape[0], _CHUNK):
        D = pairwise_distances(Q[start:start + _CHUNK], R, weights)
        out[start:start + _CHUNK] = np.argsort(D, axis=1, kind="stable")[:, :k]
    return out


@dataclass(frozen=True)
class KnnPredictor:
    weights: np.ndarray
    X: np.ndarray
    y: np.ndarray
    k: int
    group: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.weights) < 0):
            raise ValueError("weights must be non-negative")
        if not 1 <= self.k <= len(self.y):
            raise ValueError(f"k={self.k} outside [1, {len(self.y)}]")

    @classmethod
    def from_coefficients(cls, beta, X, y, k, group=0):
        beta = np.asarray(beta, dtype=float)[: np.shape(X)[1]]
        return cls(beta * beta, np.asarray(X, dtype=float), np.asarray(y, dtype=float), int(k), group)

    @classmethod
    def from_group(cls, group, beta, k):
        return cls.from_coefficients(beta, group.X, group.y, k, group.treatment)

    def predict(self, Q):
        """Mean outcome of the k nearest members for each row of ``Q``."""
        idx = nearest_indices(Q, self.X, self.weights, self.k)
        return self.y[idx].mean(axis=1)


def predict_knn(x, predictor):
    return float(predictor.predict(np.asarray(x, dtype=float)[None, :])[0])


def fit_k_rule(pairs):
    """Least-squares line K = a + b * sqrt(N) through (N_m, K_m) pairs."""
    pairs = [(float(n), float(k)) for n, k in pairs]
    if len(pairs) < 2 or len({n for n, _ in pairs}) < 2:
        raise DegeneratePairs("need at least two pairs with distinct group sizes")
    s = np.sqrt([n for n, _ in pairs])
    A = np.column_stack([np.ones_like(s), s])
    a, b = np.linalg.lstsq(A, np.array([k for _, k in pairs]), rcond=None)[0]
    return float(a), float(b)


def apply_k_rule(rule, n):
    a, b = rule
    return int(min(max(round(a + b * math.sqrt(n)), 1), n))


def tune_k(X, y, weights, k_grid=DEFAULT_K_GRID, folds=5, seed=0):
    """Cross-validated K under mean absolute error; ties go to the smaller K.

    Grid values larger than the smallest training fold are dropped. Each
    fold's neighbor ordering is computed once and reused for all K.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    parts = kfold_indices(len(y), folds, seed)
    max_k = len(y) - max(len(p) for p in parts)
    grid = sorted({k for k in k_grid if 1 <= k <= max_k})
    if not grid:
        grid = [max(1, min(min(k_grid), max_k))]
    if len(grid) == 1:
        return grid[0]
    kmax = grid[-1]
    err = np.zeros(len(grid))
    for test in parts:
        train = np.setdiff1d(np.arange(len(y)), test)
        idx = nearest_indices(X[test], X[train], weights, kmax)
        csum = np.cumsum(y[train][idx], axis=1)
        for g, k in enumerate(grid):
            err[g] += np.mean(np.abs(y[test] - csum[:, k - 1] / k))
    return grid[int(np.argmin(err))]
