"""Exact binomial machinery for median tests over sampled explanations.

All sums are evaluated in exact rational arithmetic and rounded to float once,
so p-values sitting right at a significance level never flip from rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from metfa.errors import InsufficientSamples

_HALF = Fraction(1, 2)


@dataclass(frozen=True)
class TestConfig:
    """Parameters of one significance run."""

    __test__ = False  # not a pytest class

    alpha: float = 0.05
    threshold_h: float | None = None
    tie_break_variance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.tie_break_variance < 0:
            raise ValueError("tie_break_variance must be nonnegative")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


class ConfidenceIndices(NamedTuple):
    k1: int
    k2: int
    n: int
    alpha: float


def _check_range(n: int, k: int) -> None:
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")


def _term(n: int, i: int, p: Fraction) -> Fraction:
    # 0**0 == 1 for Fraction, which is the convention we want
    return math.comb(n, i) * p**i * (1 - p) ** (n - i)


def _to_prob(total: Fraction) -> float:
    return float(min(total, Fraction(1)))


def binom_tail_geq(n: int, k: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(n, p)."""
    _check_range(n, k)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    q = Fraction(p)
    return _to_prob(sum((_term(n, i, q) for i in range(k, n + 1)), Fraction(0)))


@lru_cache(maxsize=256)
def _leq_table(n: int) -> tuple[float, ...]:
    # entry k: sum_{i>=k} C(n,i) p*^i (1-p*)^(n-i), with p* = min(1/2, i/n) per term
    terms = [_term(n, i, min(_HALF, Fraction(i, n))) for i in range(n + 1)]
    out = [0.0] * (n + 1)
    acc = Fraction(0)
    for k in range(n, -1, -1):
        acc += terms[k]
        out[k] = _to_prob(acc)
    return tuple(out)


def pvalue_median_leq(n: int, k: int) -> float:
    """p-value of H0 "median <= h" given k of n samples are >= h.

    Each summand uses its own maximizing success probability
    ``min(1/2, i/n)``, so the bound holds for every distribution whose
    median is at most h. The sum may exceed one and is clamped.
    """
    _check_range(n, k)
    if n == 0:
        return 1.0
    return _leq_table(n)[k]


def pvalue_median_geq(n: int, k: int) -> float:
    """p-value of H0 "median >= h"; mirror image of :func:`pvalue_median_leq`."""
    _check_range(n, k)
    if n == 0:
        return 1.0
    # the lower-tail sum with p* = max(1/2, i/n) is term-by-term the upper-tail
    # sum at n - k, so the table is shared
    return _leq_table(n)[n - k]


@lru_cache(maxsize=256)
def _half_binom_cdf(n: int) -> tuple[Fraction, ...]:
    denom = 2**n
    out, acc = [], 0
    for i in range(n + 1):
        acc += math.comb(n, i)
        out.append(Fraction(acc, denom))
    return tuple(out)


def pvalue_median_eq(n: int, k: int) -> float:
    """Two-sided p-value of H0 "median == h" given k of n samples are >= h."""
    _check_range(n, k)
    lo, hi = min(k, n - k), max(k, n - k)
    if hi - lo <= 1:
        return 1.0
    cdf = _half_binom_cdf(n)
    # {0..lo} and {hi..n} are disjoint here and symmetric in size
    return _to_prob(cdf[lo] + (1 - cdf[hi - 1]))


def confidence_indices(n: int, alpha: float) -> ConfidenceIndices:
    """Order-statistic ranks (k1, k2 = n - k1) bounding the median.

    k1 is the largest k whose lower binomial(n, 1/2) tail is at most alpha/2.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    cdf = _half_binom_cdf(n)
    bound = Fraction(alpha) / 2
    if cdf[0] > bound:
        raise InsufficientSamples(n, alpha, min_samples(alpha, "two"))
    k1 = 0
    while k1 + 1 <= n and cdf[k1 + 1] <= bound:
        k1 += 1
    return ConfidenceIndices(k1, n - k1, n, alpha)


def min_samples(alpha: float, sided: str = "one") -> int:
    """Smallest sample count that can reach significance level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    base = math.ceil(-math.log2(alpha))
    if sided == "one":
        return base
    if sided == "two":
        return base + 1
    raise ValueError(f"sided must be 'one' or 'two', got {sided!r}")


# Acklam's rational approximation of the standard normal quantile,
# relative error below 1.2e-9 over the open unit interval.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _poly(coefs, x):
    acc = 0.0
    for c in coefs:
        acc = acc * x + c
    return acc


def normal_quantile(p: float) -> float:
    """Inverse CDF of the standard normal distribution."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p={p} outside (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -_poly(_C, q) / (_poly(_D, q) * q + 1.0)
    q = p - 0.5
    r = q * q
    return _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)


def jackknife_se_of_mean(samples: Sequence[float]) -> float:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("jackknife needs at least 2 samples")
    loo = (x.sum() - x) / (n - 1)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def smoothgrad_asymptotic_ci(samples: Sequence[float], alpha: float = 0.05) -> tuple[float, float]:
    """Normal-approximation interval around the sample mean.

    The spread is the jackknife standard error of the mean; the interval is
    not clamped to the score range.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need a 1-d sequence of at least 2 samples")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    mu = float(x.mean())
    half = normal_quantile(1.0 - alpha / 2.0) * jackknife_se_of_mean(x)
    return mu - half, mu + half
