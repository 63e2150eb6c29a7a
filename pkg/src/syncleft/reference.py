"""Binomial reference models for receptor occupancy and NT survival."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "UnivariatePmf",
    "binomial_pmf",
    "binomial_logpmf",
    "binomial_lower_tail",
    "binomial_upper_tail",
    "occupancy_model",
    "survival_model",
]


@dataclass(frozen=True, eq=False)
class UnivariatePmf:
    """Probabilities on the integer support ``start, start+1, ...``."""

    probs: np.ndarray
    start: int = 0

    @property
    def support(self):
        return np.arange(self.start, self.start + len(self.probs))

    @property
    def total(self):
        return float(self.probs.sum())

    def mean(self):
        return float(self.support @ self.probs / self.probs.sum())

    def var(self):
        m = self.mean()
        return float(((self.support - m) ** 2) @ self.probs / self.probs.sum())

    def padded(self, stop):
        """Probabilities on ``0..stop`` (zero-filled)."""
        out = np.zeros(stop + 1)
        lo = max(self.start, 0)
        hi = min(self.start + len(self.probs) - 1, stop)
        if hi >= lo:
            out[lo : hi + 1] = self.probs[lo - self.start : hi - self.start + 1]
        return out


def _check_domain(n, p):
    if n < 0 or int(n) != n:
        raise ValueError(f"number of trials must be a non-negative integer, got {n!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"success probability must lie in [0, 1], got {p!r}")


def binomial_logpmf(n, p):
    """Log-probabilities of Binomial(n, p) on ``0..n`` (``-inf`` for zero mass)."""
    _check_domain(n, p)
    k = np.arange(n + 1)
    if p == 0.0 or p == 1.0:
        out = np.full(n + 1, -np.inf)
        out[0 if p == 0.0 else n] = 0.0
        return out
    logc = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return logc + k * math.log(p) + (n - k) * math.log1p(-p)


def binomial_pmf(k, n, p):
    """Binomial probability mass ``P(K = k)`` for ``K ~ Binomial(n, p)``."""
    _check_domain(n, p)
    if not 0 <= k <= n or int(k) != k:
        raise ValueError(f"k={k!r} outside 0..{n}")
    return float(math.exp(binomial_logpmf(n, p)[int(k)]))


def binomial_lower_tail(n, p):
    """``P(K <= k)`` for ``k = 0..n``, summed in log space."""
    with np.errstate(invalid="ignore"):
        return np.exp(np.logaddexp.accumulate(binomial_logpmf(n, p)))


def binomial_upper_tail(n, p):
    """``P(K >= k)`` for ``k = 0..n``, summed in log space."""
    with np.errstate(invalid="ignore"):
        return np.exp(np.logaddexp.accumulate(binomial_logpmf(n, p)[::-1])[::-1])


def _fraction(mean, total):
    if total == 0:
        return 0.0
    return min(max(float(mean) / total, 0.0), 1.0)


def occupancy_model(meanfield, t, C):
    """Independent-receptor model: ``O(t) ~ Binomial(C, o(t)/C)``."""
    p = _fraction(meanfield.o_at(t), C)
    return UnivariatePmf(np.exp(binomial_logpmf(C, p)))


def survival_model(meanfield, t, N0):
    """Independent-degradation model: ``N(t) ~ Binomial(N0, n(t)/N0)``."""
    p = _fraction(meanfield.n_at(t), N0)
    return UnivariatePmf(np.exp(binomial_logpmf(N0, p)))
