"""Regularized least-absolute-deviation regression.

Solves, for a single treatment group,

    min_beta  (1/N) sum_i |y_i - x_i' beta| + r * sqrt(||beta||^2 + 1)

with a log-barrier interior-point method. Writing the problem in epigraph
form (t_i >= |e_i|, s >= ||(beta, 1)||) every slack can be minimized out
of the barrier subproblem in closed form, which leaves a smooth, strictly
convex function of ``beta`` alone that is minimized by damped Newton steps.
Each central point yields a dual-feasible vector ``u`` (|u_i| <= 1,
||X'u / N|| <= r), so the reported gap is a certificate, not a heuristic.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .cv import cv_select
from .errors import NotConverged, ShapeMismatch

DEFAULT_R_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iters: int = 10_000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class RobustLinearModel:
    beta: np.ndarray
    r: float
    objective_value: float
    group: int = 0
    gap: float = 0.0
    iterations: int = field(default=0, compare=False)

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.beta


def _check(X, y, beta=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if beta is not None:
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.shape[0] != X.shape[1]:
            raise ShapeMismatch(f"beta has length {beta.shape[0]}, expected {X.shape[1]}")
    return X, y, beta


def rlad_objective(X, y, beta, r):
    X, y, beta = _check(X, y, beta)
    if r < 0:
        raise ValueError("r must be non-negative")
    return float(np.mean(np.abs(y - X @ beta)) + r * math.sqrt(beta @ beta + 1.0))


def _dual_bound(X, y, u, r, beta):
    """Lower bound on the optimum from a dual vector with |u_i| <= 1.

    The dual is max (1/N) u'y + sqrt(r^2 - ||X'u/N||^2) over the box
    intersected with that ball. Roundoff can leave ||X'u/N|| a hair above
    r (always, when r = 0); the excess is charged against the primal point.
    """
    n = X.shape[0]
    g = X.T @ u / n
    gn = math.sqrt(g @ g)
    slack = math.sqrt(max(r - gn, 0.0) * (r + gn))
    return float(u @ y / n + slack - max(gn - r, 0.0) * math.sqrt(beta @ beta))


def _crossover(X, y, r, beta):
    """Snap a near-optimal point onto the exact optimum of its active set.

    Points with the k smallest residuals are held at zero residual, the
    rest keep their signs, and the KKT system of the resulting smooth
    equality-constrained problem is solved by Newton's method. Its
    multipliers complete an exact dual vector. Returns the certified
    ``(beta, objective, gap)`` with the smallest gap, or None.
    """
    n, p = X.shape
    e = y - X @ beta
    order = np.argsort(np.abs(e), kind="stable")
    best = None
    for k in range(0, min(p, n) + 1):
        act = order[:k]
        rest = order[k:]
        sigma = np.sign(e[rest])
        if np.any(sigma == 0):
            continue
        c = X[rest].T @ sigma / n
        XA = X[act]
        b = beta.copy()
        lam = np.zeros(k)
        ok = False
        for _ in range(30):
            s = math.sqrt(b @ b + 1.0)
            F = np.concatenate([r * b / s - c - XA.T @ lam / n, XA @ b - y[act]])
            J = np.zeros((p + k, p + k))
            J[:p, :p] = r * (np.eye(p) / s - np.outer(b, b) / s ** 3)
            J[:p, p:] = -XA.T / n
            J[p:, :p] = XA
            try:
                delta = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                break
            b = b + delta[:p]
            lam = lam + delta[p:]
            if not np.all(np.isfinite(delta)) or b @ b > 1e24:
                break
            if np.max(np.abs(delta)) <= 1e-14 * (1.0 + np.max(np.abs(b))):
                ok = True
                break
        if not ok or np.any(np.abs(lam) > 1.0 + 1e-12):
            continue
        e_new = y - X @ b
        if np.any(sigma * e_new[rest] < 0):
            continue
        u = np.empty(n)
        u[rest] = sigma
        u[act] = np.clip(lam, -1.0, 1.0)
        obj = rlad_objective(X, y, b, r)
        gap = max(obj - _dual_bound(X, y, u, r, b), 0.0)
        if best is None or gap < best[2]:
            best = (b, obj, gap)
    return best


class _Barrier:
    """Reduced barrier function of beta for a fixed path parameter tau.

    Up to additive constants it equals
        sum_i [w_i - log(1 + w_i)] + [v - log(1 + v)],
    w_i = sqrt(1 + (tau e_i / N)^2),  v = sqrt(1 + tau^2 r^2 (||beta||^2 + 1)).
    """

    def __init__(self, X, y, r, tau):
        self.X, self.y, self.r, self.tau = X, y, r, tau
        self.n = X.shape[0]
        self.c = tau / self.n

    def value(self, beta):
        z = self.c * (self.y - self.X @ beta)
        w = np.hypot(1.0, z)
        f = float(np.sum(w - np.log1p(w)))
        if self.r > 0:
            v = math.hypot(1.0, self.tau * self.r * math.sqrt(beta @ beta + 1.0))
            f += v - math.log1p(v)
        return f

    def derivatives(self, beta):
        X, c = self.X, self.c
        z = c * (self.y - X @ beta)
        w = np.hypot(1.0, z)
        u = z / (1.0 + w)
        grad = -c * (X.T @ u)
        d2 = c * c / (w * (1.0 + w))
        hess = (X.T * d2) @ X
        if self.r > 0:
            tr = self.tau * self.r
            q = beta @ beta + 1.0
            v = math.hypot(1.0, tr * math.sqrt(q))
            h1 = tr * tr / (2.0 * (1.0 + v))
            h2 = -(tr ** 4) / (4.0 * v * (1.0 + v) ** 2)
            grad = grad + 2.0 * h1 * beta
            hess = hess + 2.0 * h1 * np.eye(beta.size) + 4.0 * h2 * np.outer(beta, beta)
        return grad, hess, u


def _newton_direction(grad, hess):
    # scale to unit diagonal before factoring; entries can span 1e-4 .. 1e18
    d = np.sqrt(np.maximum(np.diag(hess), 1e-300))
    hs = hess / np.outer(d, d)
    try:
        L = np.linalg.cholesky(hs)
        step = np.linalg.solve(L.T, np.linalg.solve(L, -grad / d))
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(hs, -grad / d, rcond=None)[0]
    return step / d


def fit_rlad(X, y, r, opts=None, group=0, beta0=None):
    """Fit the regularized LAD model.

    Parameters
    ----------
    X : (N, p) array
    y : (N,) array
    r : float
        Penalty weight, ``r >= 0``.
    opts : SolverOptions, optional
        ``tolerance`` is an absolute bound on the objective gap.
    beta0 : array, optional
        Starting point; defaults to a ridge-regularized least-squares fit.

    Returns
    -------
    RobustLinearModel

    Raises
    ------
    NotConverged
        If the gap is still above tolerance after ``max_iters`` Newton
        steps. ``exc.result`` holds the best model found.
    """
    opts = opts or SolverOptions()
    X, y, _ = _check(X, y)
    if X.shape[0] < 1:
        raise ShapeMismatch("need at least one observation")
    if r < 0:
        raise ValueError("r must be non-negative")
    n, p = X.shape
    if beta0 is None:
        beta = np.linalg.solve(X.T @ X + 1e-8 * np.eye(p), X.T @ y) if p else np.zeros(0)
    else:
        beta = np.array(beta0, dtype=float)
    # barrier parameter: two linear constraints per residual plus the cone
    theta = 2.0 * n + (2.0 if r > 0 else 0.0)

    obj = rlad_objective(X, y, beta, r)
    best = None
    tau = theta / max(obj, 1e-12)
    iters = 0
    while iters < opts.max_iters:
        bar = _Barrier(X, y, r, tau)
        fval = bar.value(beta)
        for _ in range(100):
            grad, hess, u = bar.derivatives(beta)
            step = _newton_direction(grad, hess)
            iters += 1
            decrement = -float(grad @ step)
            if decrement < 1e-12 or iters >= opts.max_iters:
                break
            alpha = 1.0
            while True:
                trial = beta + alpha * step
                ftrial = bar.value(trial)
                if ftrial <= fval - 0.25 * alpha * decrement or alpha < 1e-10:
                    break
                alpha *= 0.5
            if alpha < 1e-10:
                # no representable progress left at this tau
                break
            beta, fval = trial, ftrial
            if decrement < 1e-9:
                break
        _, _, u = bar.derivatives(beta)
        obj = rlad_objective(X, y, beta, r)
        gap = max(obj - _dual_bound(X, y, u, r, beta), 0.0)
        if best is None or gap < best.gap:
            best = RobustLinearModel(beta.copy(), float(r), obj, group, gap, iters)
        if gap > opts.tolerance and theta / tau < 1e-4:
            snapped = _crossover(X, y, r, beta)
            if snapped is not None and snapped[2] < best.gap:
                best = RobustLinearModel(snapped[0], float(r), snapped[1], group, snapped[2], iters)
        if best.gap <= opts.tolerance or tau > 1e18:
            break
        tau *= 10.0

    if best.gap <= opts.tolerance:
        return best
    raise NotConverged(
        f"RLAD solver stopped with gap {best.gap:.3g} > tolerance {opts.tolerance:.3g}",
        result=best,
        gap=best.gap,
    )


def fit_rlad_lenient(X, y, r, opts=None, group=0):
    """Like :func:`fit_rlad` but returns the best iterate instead of raising."""
    try:
        return fit_rlad(X, y, r, opts, group)
    except NotConverged as exc:
        return exc.result


def cross_validate_r(X, y, grid=DEFAULT_R_GRID, folds=5, seed=0, opts=None):
    """Pick the penalty with the smallest mean out-of-fold absolute error.

    Ties go to the larger ``r``.
    """
    X, y, _ = _check(X, y)

    def fit_predict(Xtr, ytr, Xte, r):
        return Xte @ fit_rlad(Xtr, ytr, r, opts).beta

    return cv_select(fit_predict, X, y, grid, folds, seed, prefer="larger")
