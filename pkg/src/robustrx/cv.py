"""K-fold cross-validation shared by every tuned model."""
import numpy as np


def kfold_indices(n, folds, seed):
    """Shuffled, near-equal folds; deterministic given ``seed``."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < folds:
        raise ValueError(f"need at least {folds} observations, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cv_errors(fit_predict, X, y, grid, folds, seed):
    """Mean out-of-fold absolute error for every grid value.

    ``fit_predict(X_train, y_train, X_test, value)`` returns predictions
    for ``X_test``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    parts = kfold_indices(len(y), folds, seed)
    errs = np.zeros((len(grid), folds))
    for f, test in enumerate(parts):
        train = np.setdiff1d(np.arange(len(y)), test)
        for g, value in enumerate(grid):
            pred = fit_predict(X[train], y[train], X[test], value)
            errs[g, f] = np.mean(np.abs(y[test] - pred))
    return errs.mean(axis=1)


def cv_select(fit_predict, X, y, grid, folds=5, seed=0, prefer="larger"):
    """Grid value with the lowest CV MeanAE; ``prefer`` breaks ties."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    if len(grid) == 1:
        return grid[0]
    scores = cv_errors(fit_predict, X, y, grid, folds, seed)
    best = scores.min()
    tied = [v for v, s in zip(grid, scores) if s == best]
    return max(tied) if prefer == "larger" else min(tied)
