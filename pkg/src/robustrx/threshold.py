"""Freeze rule: keep the current treatment unless the predicted gain is large.

The threshold T(x) comes from a sub-Gaussian tail bound on the predicted
outcomes. Its inputs, the conditional mean and spread of the prediction
for each arm, are estimated by refitting the robust linear model on random
subsamples of each treatment group and predicting linearly.

All outcome quantities here (x_co, mu, c, T) are in raw outcome units.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import ShapeMismatch
from .policy import DETERMINISTIC, expected_predicted_outcome, sample_treatment
from .rlad import fit_rlad
from .seeding import derive_seed

DEFAULT_EPS_BAR = 0.05
DEFAULT_SUBSAMPLE_FRAC = 0.7
DEFAULT_SUBSAMPLE_REPS = 30


def subsample_size(n, frac=DEFAULT_SUBSAMPLE_FRAC):
    """ceil(frac * n), kept strictly below n."""
    if n < 2:
        raise ValueError("a group needs at least two members to subsample")
    return int(min(max(math.ceil(frac * n), 1), n - 1))


def subsample_indices(n, a, d, seed):
    """``d`` draws of ``a`` distinct row indices out of ``n``."""
    if not 1 <= a < n:
        raise ValueError(f"subsample size {a} must be in [1, {n})")
    if d < 2:
        raise ValueError("need at least two repetitions")
    gen = np.random.default_rng(seed)
    return [gen.choice(n, size=a, replace=False) for _ in range(d)]


@dataclass(frozen=True)
class SubsampleEnsemble:
    """Coefficients refitted on ``d`` random subsamples of one group."""

    betas: np.ndarray  # (d, p)
    a: int
    group: int = 0

    @property
    def d(self):
        return self.betas.shape[0]

    def mu_c(self, X):
        """Mean and (1/(d-1)) standard deviation of x'beta_i over the ensemble."""
        preds = np.atleast_2d(np.asarray(X, dtype=float)) @ self.betas.T
        return preds.mean(axis=1), preds.std(axis=1, ddof=1)


def fit_subsample_ensemble(X, y, r, a=None, d=DEFAULT_SUBSAMPLE_REPS, seed=0, opts=None, group=0):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    a = subsample_size(len(y)) if a is None else a
    betas = [fit_rlad(X[idx], y[idx], r, opts).beta for idx in subsample_indices(len(y), a, d, seed)]
    return SubsampleEnsemble(np.array(betas), a, group)


@dataclass(frozen=True)
class MuCEstimate:
    mu: np.ndarray
    c: np.ndarray
    a: int
    d: int


def estimate_mu_c(x, group, a, d, r, seed, opts=None):
    """Subsample estimate of the mean and spread of arm ``group``'s prediction at ``x``."""
    ens = fit_subsample_ensemble(group.X, group.y, r, a, d, seed, opts, group.treatment)
    mu, c = ens.mu_c(x)
    return float(mu[0]), float(c[0])


def _threshold(x_co, mu, c, log_eps):
    mu = np.asarray(mu, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("spread estimates must be non-negative")
    x_co = np.asarray(x_co, dtype=float)
    slack = np.sqrt(-2.0 * c * c * log_eps)
    inner = np.min(x_co[..., None] - mu - slack, axis=-1)
    out = np.maximum(0.0, inner)
    return float(out) if out.ndim == 0 else out


def threshold_randomized(x_co, mu, c, eps_bar, M=None):
    """T = max(0, min_m(x_co - mu_m - sqrt(-2 c_m^2 log(eps_bar / M))))."""
    if not 0 < eps_bar < 1:
        raise ValueError("eps_bar must lie in (0, 1)")
    M = np.shape(mu)[-1] if M is None else M
    return _threshold(x_co, mu, c, math.log(eps_bar / M))


def threshold_deterministic(x_co, mu, c, eps_bar):
    """Same as :func:`threshold_randomized` with log(eps_bar) in the slack."""
    if not 0 < eps_bar < 1:
        raise ValueError("eps_bar must lie in (0, 1)")
    return _threshold(x_co, mu, c, math.log(eps_bar))


@dataclass(frozen=True)
class FreezeDecision:
    frozen: bool
    threshold: float
    treatment: int
    probs: np.ndarray = None
    y_hat: np.ndarray = None


def freeze_mask(y_hat, probs, x_co, mu, c, cfg, eps_bar):
    """Vectorized freeze rule; returns ``(frozen, T)`` arrays."""
    if cfg.mode == DETERMINISTIC:
        T = threshold_deterministic(x_co, mu, c, eps_bar)
        score = np.min(y_hat, axis=-1)
    else:
        T = threshold_randomized(x_co, mu, c, eps_bar)
        score = expected_predicted_outcome(probs, y_hat)
    return score > np.asarray(x_co) - T, T


def prescribe_batch(y_hat, x_co, m_c, mu, c, cfg, eps_bar=DEFAULT_EPS_BAR, seed=0):
    """Apply the freeze rule and policy to many records at once.

    ``y_hat``, ``mu`` and ``c`` are (n, M). Record ``i`` samples with a
    generator seeded by ``derive_seed(seed, i)``.
    """
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float))
    x_co = np.asarray(x_co, dtype=float).reshape(-1)
    m_c = np.asarray(m_c, dtype=int).reshape(-1)
    if not (y_hat.shape == np.shape(mu) == np.shape(c)) or y_hat.shape[0] != x_co.shape[0]:
        raise ShapeMismatch("y_hat, mu and c must be (n, M) with n = len(x_co)")
    probs = cfg.probs(y_hat)
    frozen, T = freeze_mask(y_hat, probs, x_co, mu, c, cfg, eps_bar)
    chosen = np.empty(len(x_co), dtype=int)
    for i in range(len(x_co)):
        if frozen[i]:
            chosen[i] = m_c[i]
        elif cfg.mode == DETERMINISTIC:
            chosen[i] = int(np.argmax(probs[i]))
        else:
            chosen[i] = sample_treatment(probs[i], np.random.default_rng(derive_seed(seed, i)))
    return chosen, frozen, T, probs


def prescribe(x, x_co, m_c, predictors, cfg, est, eps_bar=DEFAULT_EPS_BAR, seed=0):
    """Freeze-rule decision for one patient.

    ``predictors`` holds one fitted K-NN predictor per arm and ``est`` the
    :class:`MuCEstimate` at ``x``.
    """
    y_hat = np.array([p.predict(np.asarray(x, dtype=float)[None, :])[0] for p in predictors])
    probs = cfg.probs(y_hat)
    frozen, T = freeze_mask(y_hat[None], probs[None], [x_co], est.mu[None], est.c[None], cfg, eps_bar)
    if frozen[0]:
        m = int(m_c)
    elif cfg.mode == DETERMINISTIC:
        m = int(np.argmax(probs))
    else:
        m = sample_treatment(probs, np.random.default_rng(seed))
    return FreezeDecision(bool(frozen[0]), float(T[0]), m, probs, y_hat)
