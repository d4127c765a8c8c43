"""Comparator predictors: OLS, LASSO, Huber regression and CART.

Each linear fit can also feed a K-NN predictor through its squared
coefficients (the "X+K-NN" composites).
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from .errors import NotConverged, SingularDesign

logger = logging.getLogger(__name__)

OLS, LASSO, HUBER = "ols", "lasso", "huber"
HUBER_DELTA = 1.345


@dataclass(frozen=True)
class LinearBaseline:
    kind: str
    beta: np.ndarray
    hyper: float = 0.0
    jittered: bool = field(default=False, compare=False)

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.beta


def predict_linear(model, x):
    return float(np.asarray(x, dtype=float) @ model.beta)


def fit_ols(X, y):
    """Least squares through the normal equations.

    A singular design gets a 1e-10 ridge and ``jittered=True``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    G = X.T @ X
    b = X.T @ y
    try:
        L = np.linalg.cholesky(G)
        beta = np.linalg.solve(L.T, np.linalg.solve(L, b))
        if np.linalg.cond(G) < 1e14:
            return LinearBaseline(OLS, beta)
    except np.linalg.LinAlgError:
        pass
    try:
        beta = np.linalg.solve(G + 1e-10 * np.eye(G.shape[0]), b)
    except np.linalg.LinAlgError:
        raise SingularDesign("normal equations are singular even with jitter") from None
    if not np.all(np.isfinite(beta)):
        raise SingularDesign("normal equations are singular even with jitter")
    logger.warning("OLS design is singular; applied 1e-10 ridge jitter")
    return LinearBaseline(OLS, beta, jittered=True)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, y, beta, lam, penalized=None):
    r = y - X @ beta
    pen = np.abs(beta) if penalized is None else np.abs(beta[penalized])
    return float(r @ r / (2 * len(y)) + lam * pen.sum())


def fit_lasso(X, y, lam, unpenalized=(), tol=1e-10, max_sweeps=100_000):
    """Cyclic coordinate descent for (1/2N)||y - X beta||^2 + lam * ||beta||_1.

    Coordinates listed in ``unpenalized`` (e.g. an intercept column) are
    excluded from the penalty.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, p = X.shape
    pen = np.full(p, float(lam))
    pen[list(unpenalized)] = 0.0
    beta = np.zeros(p)
    if not len(unpenalized) and np.all(np.abs(X.T @ y) / n <= lam):
        # zero satisfies the KKT conditions exactly
        return LinearBaseline(LASSO, beta, float(lam))
    col_sq = (X * X).sum(axis=0) / n
    resid = y.copy()
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            old = beta[j]
            rho = X[:, j] @ resid / n + col_sq[j] * old
            new = soft_threshold(rho, pen[j]) / col_sq[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old) * np.sqrt(col_sq[j]))
        if max_delta <= tol:
            return LinearBaseline(LASSO, beta, float(lam))
    raise NotConverged("LASSO coordinate descent did not converge", result=LinearBaseline(LASSO, beta, float(lam)))


def mad_scale(r):
    r = np.asarray(r, dtype=float)
    return float(1.4826 * np.median(np.abs(r - np.median(r))))


def huber_loss(t, delta):
    a = np.abs(t)
    return np.where(a <= delta, 0.5 * t * t, delta * (a - 0.5 * delta))


def huber_objective(X, y, beta, delta, scale):
    return float(np.sum(huber_loss((y - X @ beta) / scale, delta)))


def fit_huber(X, y, delta=HUBER_DELTA, scale=None, tol=1e-6, max_iters=5000):
    """Minimize sum_i rho_delta((y_i - x_i'beta) / scale).

    ``scale`` defaults to the MAD of the OLS residuals, so ``delta`` is in
    standardized-residual units. Steps are Newton steps on the quadratic
    region when it pins down beta, IRLS steps otherwise; iteration stops
    once the gradient norm is below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not delta > 0:
        raise ValueError("delta must be positive")
    beta = fit_ols(X, y).beta
    if scale is None:
        scale = mad_scale(y - X @ beta)
        scale = scale if scale > 0 else 1.0
    p = X.shape[1]
    f = huber_objective(X, y, beta, delta, scale)
    for _ in range(max_iters):
        t = (y - X @ beta) / scale
        grad = -X.T @ np.clip(t, -delta, delta) / scale
        if np.linalg.norm(grad) <= tol:
            return LinearBaseline(HUBER, beta, float(delta))
        inside = np.abs(t) <= delta
        step = None
        if inside.sum() >= p:
            Xi = X[inside]
            H = Xi.T @ Xi / scale ** 2
            if np.linalg.matrix_rank(H) == p:
                step = np.linalg.solve(H, -grad)
        if step is not None:
            alpha = 1.0
            while alpha > 1e-8:
                cand = beta + alpha * step
                fc = huber_objective(X, y, cand, delta, scale)
                if fc <= f + 1e-4 * alpha * (grad @ step):
                    break
                alpha *= 0.5
            else:
                step = None
        if step is None:
            # IRLS: weighted least squares with Huber weights never increases the objective
            w = np.where(inside, 1.0, delta / np.maximum(np.abs(t), 1e-300))
            cand = np.linalg.lstsq(X * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
            fc = huber_objective(X, y, cand, delta, scale)
        beta, f = cand, fc
    raise NotConverged("Huber regression did not converge", result=LinearBaseline(HUBER, beta, float(delta)))


# --- CART -------------------------------------------------------------------

@dataclass
class CartNode:
    value: float
    n: int
    feature: int = -1
    threshold: float = 0.0
    left: "CartNode" = None
    right: "CartNode" = None

    @property
    def is_leaf(self):
        return self.left is None

    def to_dict(self):
        if self.is_leaf:
            return {"value": self.value, "n": self.n}
        return {"value": self.value, "n": self.n, "feature": self.feature,
                "threshold": self.threshold, "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if "feature" not in d:
            return cls(d["value"], d["n"])
        return cls(d["value"], d["n"], d["feature"], d["threshold"],
                   cls.from_dict(d["left"]), cls.from_dict(d["right"]))


@dataclass(frozen=True)
class CartModel:
    root: CartNode
    max_depth: int
    min_leaf: int

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([predict_cart(self, x) for x in X])

    def depth(self):
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out


def predict_cart(model, x):
    node = model.root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def best_split(X, y, min_leaf):
    """Variance-reduction split as ``(gain, feature, threshold)`` or None.

    Thresholds are midpoints between consecutive distinct values. Ties go
    to the lowest feature index, then the lowest threshold.
    """
    n, p = X.shape
    y = y - y.mean()
    best = None
    k = np.arange(min_leaf, n - min_leaf + 1)  # candidate left-side sizes
    if k.size == 0:
        return None
    for j in range(p):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cs = np.cumsum(y[order])
        kj = k[xs[k - 1] < xs[k]]
        if kj.size == 0:
            continue
        left = cs[kj - 1]
        # SSE reduction; the parent's sum is zero after centering
        gain = left * left / kj + left * left / (n - kj)
        i = int(np.argmax(gain))  # first maximum = lowest threshold
        g = float(gain[i])
        if best is None or g > best[0] * (1 + 1e-12) + 1e-300:
            best = (g, j, float(0.5 * (xs[kj[i] - 1] + xs[kj[i]])))
    return best


def fit_cart(X, y, max_depth=6, min_leaf=10):
    """Greedy regression tree; leaves predict the mean of their members."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if max_depth < 1 or min_leaf < 1:
        raise ValueError("max_depth and min_leaf must be >= 1")

    def grow(idx, depth):
        node = CartNode(float(y[idx].mean()), int(idx.size))
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        found = best_split(X[idx], y[idx], min_leaf)
        sse = float(np.sum((y[idx] - node.value) ** 2))
        if found is None or found[0] <= 1e-12 * sse:
            return node
        _, j, thr = found
        go_left = X[idx, j] <= thr
        node.feature, node.threshold = j, thr
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return CartModel(grow(np.arange(len(y)), 0), int(max_depth), int(min_leaf))
