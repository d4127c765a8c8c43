"""Independent brute-force reference solvers used by the tests."""
import numpy as np


def rlad_obj_batch(X, y, B, r):
    """Objective at every row of ``B``."""
    R = y[None, :] - B @ X.T
    return np.abs(R).mean(axis=1) + r * np.sqrt((B * B).sum(axis=1) + 1)


def grid_min_1d(X, y, r, lo=-10.0, hi=10.0, step=1e-4):
    b = np.arange(lo, hi + step / 2, step)[:, None]
    vals = np.concatenate([rlad_obj_batch(X, y, b[i:i + 20000], r) for i in range(0, len(b), 20000)])
    i = int(np.argmin(vals))
    return float(vals[i]), b[i]


def grid_min_2d(X, y, r, lo=-10.0, hi=10.0, n=401, zooms=8):
    """Zooming grid search; each level shrinks the box around the best cell."""
    center = np.zeros(2)
    half = (hi - lo) / 2
    center[:] = (hi + lo) / 2
    best = (np.inf, None)
    for _ in range(zooms):
        g = np.linspace(-half, half, n)
        B = np.stack(np.meshgrid(center[0] + g, center[1] + g, indexing="ij"), -1).reshape(-1, 2)
        vals = rlad_obj_batch(X, y, B, r)
        i = int(np.argmin(vals))
        if vals[i] < best[0]:
            best = (float(vals[i]), B[i])
        center = B[i]
        half = half * 8 / n * 2
    return best


def gauss_solve(A, b):
    """Gaussian elimination with partial pivoting (no numpy.linalg)."""
    A = [list(map(float, row)) + [float(v)] for row, v in zip(A, b)]
    n = len(A)
    for c in range(n):
        piv = max(range(c, n), key=lambda i: abs(A[i][c]))
        A[c], A[piv] = A[piv], A[c]
        for i in range(c + 1, n):
            f = A[i][c] / A[c][c]
            for j in range(c, n + 1):
                A[i][j] -= f * A[c][j]
    x = [0.0] * n
    for i in reversed(range(n)):
        x[i] = (A[i][n] - sum(A[i][j] * x[j] for j in range(i + 1, n))) / A[i][i]
    return np.array(x)


def coverage_rate(mu, c, x_co, T, score, trials=100_000, seed=0):
    """Monte Carlo P(score(y_hat) > x_co - T) with y_hat_m ~ N(mu_m, c_m^2) independent."""
    gen = np.random.default_rng(seed)
    Y = mu[None, :] + c[None, :] * gen.standard_normal((trials, len(mu)))
    return float(np.mean(score(Y) > x_co - T))


def coverage_config(gen, eps_bar, log_eps):
    """Random (mu, c, x_co) for which the threshold's inner minimum is positive."""
    M = int(gen.integers(2, 6))
    mu = gen.uniform(0, 10, M)
    c = gen.uniform(0.1, 2.0, M)
    x_co = float(np.max(mu + np.sqrt(-2 * c * c * log_eps)) + gen.uniform(0.1, 3.0))
    return mu, c, x_co
