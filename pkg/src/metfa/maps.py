"""Significance, smoothed and bound maps built from sampled explanations."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from metfa.errors import DegenerateInput, EmptyTrim, InsufficientSamples
from metfa.stats import (
    ConfidenceIndices,
    _leq_table,
    confidence_indices,
    min_samples,
)

IMPORTANT, UNDECIDED, UNIMPORTANT = 1, 0, -1


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """N sampled attribution maps over F features, one row per sample.

    ``shape`` is the spatial layout ``(width, height)`` when the features are
    pixels; ``None`` for sequences and flat vectors.
    """

    values: np.ndarray
    shape: tuple[int, int] | None = None
    tie_broken: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise ValueError(f"sample matrix must be 2-d, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("sample matrix needs at least one sample and one feature")
        if not np.all(np.isfinite(v)):
            i, j = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"non-finite score at sample {i}, feature {j}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.shape is not None:
            w, h = (int(s) for s in self.shape)
            if w * h != v.shape[1]:
                raise ValueError(f"spatial shape {w}x{h} does not match {v.shape[1]} features")
            object.__setattr__(self, "shape", (w, h))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SampleMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.tie_broken == other.tie_broken
            and np.array_equal(self.values, other.values)
        )

    def with_values(self, values, **changes) -> "SampleMatrix":
        return dataclasses.replace(self, values=values, **changes)


@dataclass(frozen=True, eq=False)
class SignificanceMap:
    labels: np.ndarray
    threshold_h: float
    alpha: float
    counts: np.ndarray = field(repr=False)

    def fraction(self, label: int) -> float:
        return float(np.mean(self.labels == label))


@dataclass(frozen=True, eq=False)
class ConfidenceBundle:
    lower: np.ndarray
    upper: np.ndarray
    smoothed: np.ndarray
    indices: ConfidenceIndices


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Min-max scale each row to [0, 1]; constant rows become 0.5."""
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    lo = v.min(axis=1, keepdims=True)
    span = v.max(axis=1, keepdims=True) - lo
    flat = span[:, 0] == 0
    out = np.empty_like(v)
    out[~flat] = (v[~flat] - lo[~flat]) / span[~flat]
    out[flat] = 0.5
    return out


def tie_break(matrix: SampleMatrix, variance: float = 1e-6, seed: int = 0) -> SampleMatrix:
    """Add tiny Gaussian jitter so that discrete scores become continuous.

    Feature j draws its column from its own stream keyed by ``(seed, j)``;
    row i of that column is the i-th draw, so the result does not depend on
    evaluation order.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0:
        return matrix.with_values(matrix.values, tie_broken=True)
    sd = float(np.sqrt(variance))
    n, f = matrix.values.shape
    jitter = np.empty((n, f))
    for j in range(f):
        jitter[:, j] = np.random.default_rng([seed, j]).normal(0.0, sd, n)
    return matrix.with_values(matrix.values + jitter, tie_broken=True)


def _split_costs(x: np.ndarray) -> np.ndarray:
    # within-group SSE for every split point s (lower group = x[:s]), s = 1..n-1
    n = x.size
    shift = x - x.mean()
    c1 = np.cumsum(shift)
    c2 = np.cumsum(shift * shift)
    s = np.arange(1, n)
    left = c2[:-1] - c1[:-1] ** 2 / s
    right = (c2[-1] - c2[:-1]) - (c1[-1] - c1[:-1]) ** 2 / (n - s)
    return np.maximum(left, 0.0) + np.maximum(right, 0.0)


def jenks_break(values) -> float:
    """Two-class natural-breaks threshold of a 1-d sample.

    Every split of the sorted data is scored by total within-class squared
    deviation. Costs equal up to rounding are tied, and ties go to the
    more balanced split, then to the lower index. Returns the midpoint of
    the two values straddling the best split.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size < 2:
        raise ValueError("need at least 2 values")
    if x[0] == x[-1]:
        raise DegenerateInput("all values are identical; no break exists")
    # split costs scale uniformly under affine maps; work on [0, 1] to avoid underflow
    unit = (x - x[0]) / (x[-1] - x[0])
    cost = _split_costs(unit)
    n = x.size
    tol = 1e-9 * float(np.sum((unit - unit.mean()) ** 2))
    best = cost.min()
    cand = np.flatnonzero(cost <= best + tol) + 1
    imbalance = np.abs(2 * cand - n)
    s = int(cand[imbalance == imbalance.min()][0])
    return float((x[s - 1] + x[s]) / 2.0)


def significance_map(matrix: SampleMatrix, h: float, alpha: float = 0.05) -> SignificanceMap:
    """Label each feature important / unimportant / undecided relative to h.

    Counts ``ct_j = #{i : e_ij >= h}`` feed the two one-sided exact tests.
    """
    n = matrix.n_samples
    need = min_samples(alpha, "one")
    if n < need:
        raise InsufficientSamples(n, alpha, need)
    counts = np.count_nonzero(matrix.values >= h, axis=0)
    table = np.asarray(_leq_table(n))
    p_above = table[counts]  # H0: median <= h
    p_below = table[n - counts]  # H0: median >= h
    labels = np.zeros(matrix.n_features, dtype=np.int8)
    labels[p_above < alpha] = IMPORTANT
    labels[p_below < alpha] = UNIMPORTANT
    return SignificanceMap(labels=labels, threshold_h=float(h), alpha=alpha, counts=counts)


def confidence_bundle(
    matrix: SampleMatrix, alpha: float = 0.05, unit_range: bool = False
) -> ConfidenceBundle:
    """Per-feature median confidence bounds and the trimmed-mean map.

    With sorted samples ``e_(1) <= ... <= e_(N)`` per feature, the bounds
    are ``e_(k1)`` and ``e_(k2)`` and the smoothed score averages
    ``e_(k1+1) .. e_(k2-1)``. When k1 is 0 the lower bound is the domain
    floor: 0 for scores known to live in [0, 1] (``unit_range``), else the
    smallest sample.
    """
    idx = confidence_indices(matrix.n_samples, alpha)
    k1, k2 = idx.k1, idx.k2
    if k2 - k1 - 1 < 1:
        raise EmptyTrim(f"no order statistics strictly between ranks {k1} and {k2}")
    srt = np.sort(matrix.values, axis=0)
    if k1 >= 1:
        lower = srt[k1 - 1].copy()
    elif unit_range:
        lower = np.minimum(0.0, srt[0])
    else:
        lower = srt[0].copy()
    upper = srt[k2 - 1].copy()
    smoothed = srt[k1 : k2 - 1].mean(axis=0)
    # rounding in the mean must not push it outside its own support
    smoothed = np.clip(smoothed, srt[k1], srt[k2 - 2])
    return ConfidenceBundle(lower=lower, upper=upper, smoothed=smoothed, indices=idx)


def smoothgrad_map(matrix: SampleMatrix) -> np.ndarray:
    """Plain per-feature mean over all samples."""
    return matrix.values.mean(axis=0)
