"""Exponentially weighted prescription policy and its argmin limit."""
from dataclasses import dataclass
import math

import numpy as np

from .errors import NonNegativityViolated

RANDOMIZED = "randomized"
DETERMINISTIC = "deterministic"
DEFAULT_XI_GRID = (0.1, 0.5, 1.0, 2.0, 5.0)


@dataclass(frozen=True)
class PolicyConfig:
    """``xi`` acts on predictions divided by ``scale``.

    ``scale`` is fitted on training data (pooled spread of predictions
    across arms) so that a given ``xi`` means the same thing for outcomes
    measured in percent or in mmHg. Deterministic mode ignores both.
    """

    xi: float = 1.0
    mode: str = RANDOMIZED
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in (RANDOMIZED, DETERMINISTIC):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not (math.isfinite(self.xi) and self.xi >= 0):
            raise ValueError("xi must be finite and >= 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def probs(self, y_hat):
        y_hat = np.asarray(y_hat, dtype=float)
        if self.mode == DETERMINISTIC:
            return np.eye(y_hat.shape[-1])[deterministic_choice(y_hat)]
        return policy_probs(y_hat / self.scale, self.xi)


def policy_probs(y_hat, xi):
    """Softmax of ``-xi * y_hat`` along the last axis.

    Computed after subtracting the row minimum, so the largest weight is
    exactly 1 and nothing overflows for outcomes in the hundreds.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    if xi < 0:
        raise ValueError("xi must be >= 0")
    z = -xi * (y_hat - y_hat.min(axis=-1, keepdims=True))
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def standardize(y_hat):
    """Scale one prediction vector to unit variance (no-op if constant)."""
    y_hat = np.asarray(y_hat, dtype=float)
    sd = y_hat.std()
    return y_hat / sd if sd > 0 else y_hat


def sample_treatment(probs, rng):
    """Inverse-CDF draw over treatment indices in ascending order."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def deterministic_choice(y_hat):
    """Argmin along the last axis; ties go to the lowest index."""
    return np.argmin(np.asarray(y_hat, dtype=float), axis=-1)


def expected_predicted_outcome(probs, y_hat):
    return np.sum(np.asarray(probs) * np.asarray(y_hat, dtype=float), axis=-1)


def regret_bound_sides(y_hat, y_true, xi, k):
    """Both sides of the expected-outcome bound for the softmax policy.

    lhs = sum_m p_m y_m
    rhs = y_k + (yhat_k - mean(yhat)) + xi * (mean(yhat^2) + sum_m p_m y_m^2) + log(M) / xi
    """
    y_hat = np.asarray(y_hat, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if np.any(y_hat < 0) or np.any(y_true < 0):
        raise NonNegativityViolated("predicted and true outcomes must be non-negative")
    if not xi > 0:
        raise ValueError("xi must be positive")
    p = policy_probs(y_hat, xi)
    lhs = float(p @ y_true)
    rhs = float(
        y_true[k]
        + (y_hat[k] - y_hat.mean())
        + xi * (np.mean(y_hat ** 2) + p @ y_true ** 2)
        + math.log(len(y_hat)) / xi
    )
    return lhs, rhs


def nonnegative_shift(y_hat, y_true):
    """Shift both vectors by one constant so neither has negative entries.

    Harness convention for checking the bound on data with negative
    outcomes; the bound's quadratic terms are not shift-invariant, so the
    shifted check is a stricter instance, not the same one.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    c = min(0.0, y_hat.min(), y_true.min())
    return y_hat - c, y_true - c
