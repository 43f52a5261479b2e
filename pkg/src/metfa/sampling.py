"""Input noise, reference predictors / attributors, and the explanation sampler.

Inputs are either numeric feature arrays (images, flattened or not) or token
sequences (lists of str). Every random draw comes from a numpy Generator
seeded by an explicit key, e.g. ``(seed, sample_index)``, so runs replay
bit-for-bit and rows do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from metfa.errors import FormatError, SpecMismatch
from metfa.maps import SampleMatrix, normalize_rows


def is_token_input(x) -> bool:
    return isinstance(x, (list, tuple)) and all(isinstance(t, str) for t in x)


def stream(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


# ---------------------------------------------------------------- noise specs


class NoiseSpec:
    kind: str = ""
    spatial: bool = True

    def apply(self, x, rng: np.random.Generator):
        token = is_token_input(x)
        if token and self.spatial:
            raise SpecMismatch(f"{self.kind} noise cannot perturb a token sequence")
        if not token and not self.spatial:
            raise SpecMismatch(f"{self.kind} noise needs a token sequence")
        if token:
            return self._apply(list(x), rng)
        return self._apply(np.asarray(x, dtype=np.float64), rng)

    def _apply(self, x, rng):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoNoise(NoiseSpec):
    """Identity perturbation; valid for both input kinds."""

    kind = "none"

    def apply(self, x, rng):
        if is_token_input(x):
            return list(x)
        return np.array(x, dtype=np.float64, copy=True)

    def describe(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class NormalNoise(NoiseSpec):
    sigma: float = 0.1
    kind = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("normal noise needs sigma > 0")

    def _apply(self, x, rng):
        return x + rng.normal(0.0, self.sigma, size=x.shape)

    def describe(self):
        return {"kind": "normal", "sigma": self.sigma}


@dataclass(frozen=True)
class UniformNoise(NoiseSpec):
    low: float = -0.1
    high: float = 0.1
    kind = "uniform"

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("uniform noise needs low < high")

    def _apply(self, x, rng):
        return x + rng.uniform(self.low, self.high, size=x.shape)

    def describe(self):
        return {"kind": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class BrightnessNoise(NoiseSpec):
    """Multiply the whole input by one factor drawn from U(low, high)."""

    low: float = 0.9
    high: float = 1.1
    kind = "brightness"

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError("brightness needs 0 < low <= high")

    def _apply(self, x, rng):
        if self.low == self.high:
            return x * self.low
        return x * rng.uniform(self.low, self.high)

    def describe(self):
        return {"kind": "brightness", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class SynonymNoise(NoiseSpec):
    """Replace each token by its synonym independently with probability p."""

    p: float = 0.5
    table: Mapping[str, str] = field(default_factory=dict)
    source: str | None = None
    kind = "synonym"
    spatial = False

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("substitution probability must lie in [0, 1]")

    def _apply(self, x, rng):
        flips = rng.random(len(x)) < self.p
        return [self.table.get(t, t) if f else t for t, f in zip(x, flips)]

    def describe(self):
        d = {"kind": "synonym", "p": self.p, "entries": len(self.table)}
        if self.source:
            d["table"] = self.source
        return d


def read_synonym_table(path) -> dict[str, str]:
    table = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise FormatError(f"{path}:{lineno}: expected 'token<TAB>synonym'")
        table[parts[0]] = parts[1]
    return table


def parse_noise(text: str) -> NoiseSpec:
    """Parse ``kind[:arg[:arg]]``, e.g. ``normal:0.1`` or ``synonym:0.5:table.tsv``."""
    kind, _, rest = text.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "none":
            return NoNoise()
        if kind == "normal":
            return NormalNoise(*map(float, args))
        if kind == "uniform":
            return UniformNoise(*map(float, args))
        if kind == "brightness":
            return BrightnessNoise(*map(float, args))
        if kind == "synonym":
            p = float(args[0]) if args else 0.5
            path = ":".join(args[1:]) if len(args) > 1 else None
            table = read_synonym_table(path) if path else {}
            return SynonymNoise(p, table, source=path)
    except TypeError as exc:
        raise ValueError(f"bad noise spec {text!r}: {exc}") from None
    raise ValueError(f"unknown noise kind {kind!r}")


# ----------------------------------------------------------------- predictors


@runtime_checkable
class Predictor(Protocol):
    n_labels: int

    def predict(self, x) -> np.ndarray: ...


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


class LinearSoftmaxPredictor:
    """softmax(W x + b)."""

    def __init__(self, weights, bias=None):
        self.weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        self.n_labels, self.n_features = self.weights.shape
        self.bias = np.zeros(self.n_labels) if bias is None else np.asarray(bias, dtype=np.float64)

    @classmethod
    def from_file(cls, path) -> "LinearSoftmaxPredictor":
        return cls(read_weight_file(path))

    def logits(self, x):
        return self.weights @ np.asarray(x, dtype=np.float64).ravel() + self.bias

    def predict(self, x):
        z = self.logits(x)
        e = np.exp(z - z.max())
        return e / e.sum()

    def gradient(self, x, label):
        # gradient of the label's logit; constant in x
        return self.weights[label].copy()


def read_weight_file(path) -> np.ndarray:
    """Read ``P <n_labels> <n_features>`` followed by one row per label."""
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except UnicodeDecodeError:
        raise FormatError(f"{path}: not a text weight file") from None
    if not lines:
        raise FormatError(f"{path}: empty weight file", 0)
    head = lines[0].split()
    if len(head) != 3 or head[0] != "P":
        raise FormatError(f"{path}: header must be 'P <n_labels> <n_features>'", 0)
    try:
        n_labels, n_features = int(head[1]), int(head[2])
        rows = [[float(t) for t in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if n_labels < 1 or n_features < 1:
        raise FormatError(f"{path}: dimensions must be positive")
    if len(rows) != n_labels or any(len(r) != n_features for r in rows):
        raise FormatError(f"{path}: expected {n_labels} rows of {n_features} weights")
    w = np.array(rows)
    if not np.all(np.isfinite(w)):
        raise FormatError(f"{path}: non-finite weight")
    return w


def write_weight_file(weights, path) -> None:
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    lines = [f"P {w.shape[0]} {w.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in w]
    Path(path).write_text("\n".join(lines) + "\n")


class PlantedPredictor:
    """Two-label predictor driven only by a planted feature subset.

    Label 1 scores ``link(mean(x[planted]))``, label 0 the complement.
    ``link="sigmoid"`` keeps scores in (0, 1); ``link="identity"`` gives the
    linear planted predictor used by the insertion / deletion oracles.
    """

    n_labels = 2

    def __init__(self, planted: Sequence[int], n_features: int, link: str = "sigmoid"):
        self.planted = np.asarray(sorted(set(int(i) for i in planted)), dtype=int)
        if self.planted.size == 0:
            raise ValueError("planted set must not be empty")
        if self.planted.min() < 0 or self.planted.max() >= n_features:
            raise ValueError("planted index out of range")
        if link not in ("sigmoid", "identity"):
            raise ValueError(f"unknown link {link!r}")
        self.n_features = n_features
        self.link = link

    def _raw(self, x):
        return float(np.asarray(x, dtype=np.float64).ravel()[self.planted].mean())

    def predict(self, x):
        z = self._raw(x)
        s = _sigmoid(z) if self.link == "sigmoid" else z
        return np.array([1.0 - s, s])

    def gradient(self, x, label):
        g = np.zeros(self.n_features)
        z = self._raw(x)
        scale = _sigmoid(z) * (1 - _sigmoid(z)) if self.link == "sigmoid" else 1.0
        g[self.planted] = scale / self.planted.size
        return g if label == 1 else -g


class TokenPredictor:
    """Label 1 scores ``sigmoid(sum of token weights)`` over the sequence."""

    n_labels = 2

    def __init__(self, weights: Mapping[str, float], bias: float = 0.0):
        self.weights = dict(weights)
        self.bias = float(bias)

    @classmethod
    def from_file(cls, path) -> "TokenPredictor":
        weights = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            try:
                weights[parts[0]] = float(parts[1])
            except (IndexError, ValueError):
                raise FormatError(f"{path}:{lineno}: expected 'token<TAB>weight'") from None
        return cls(weights)

    def predict(self, tokens):
        s = _sigmoid(self.bias + sum(self.weights.get(t, 0.0) for t in tokens))
        return np.array([1.0 - s, s])


class ConstantPredictor:
    n_labels = 2

    def __init__(self, score: float = 0.5):
        self.score = float(score)

    def predict(self, x):
        return np.array([1.0 - self.score, self.score])


def top_label(predictor, x) -> int:
    return int(np.argmax(predictor.predict(x)))


# ----------------------------------------------------------------- attributors


@runtime_checkable
class Attributor(Protocol):
    def explain(self, predictor, x, label: int, rng: np.random.Generator) -> np.ndarray: ...


def n_features_of(x) -> int:
    return len(x) if is_token_input(x) else int(np.asarray(x).size)


def keep_features(x, keep: np.ndarray):
    """Zero the dropped features of an array, or drop the tokens of a sequence."""
    if is_token_input(x):
        return [t for t, k in zip(x, keep) if k]
    arr = np.asarray(x, dtype=np.float64)
    return np.where(keep.reshape(arr.shape), arr, 0.0)


def _finish(raw, normalize):
    raw = np.asarray(raw, dtype=np.float64)
    return normalize_rows(raw)[0] if normalize else raw


class OcclusionAttributor:
    """Score drop when one feature is zeroed (or its token removed)."""

    def __init__(self, normalize: bool = True):
        self.normalize = normalize

    def explain(self, predictor, x, label, rng=None):
        f = n_features_of(x)
        base = predictor.predict(x)[label]
        raw = np.empty(f)
        keep = np.ones(f, dtype=bool)
        for j in range(f):
            keep[j] = False
            raw[j] = base - predictor.predict(keep_features(x, keep))[label]
            keep[j] = True
        return _finish(raw, self.normalize)


class GradientAttributor:
    """Absolute analytic gradient; the predictor must expose ``gradient``."""

    def __init__(self, normalize: bool = True):
        self.normalize = normalize

    def explain(self, predictor, x, label, rng=None):
        if not hasattr(predictor, "gradient"):
            raise TypeError(f"{type(predictor).__name__} has no analytic gradient")
        return _finish(np.abs(predictor.gradient(x, label)), self.normalize)


class RandomMaskingAttributor:
    """Mean predicted score over random masks that keep each feature.

    Each of ``n_masks`` masks keeps every feature independently with
    probability ``keep_prob``. A feature no mask keeps scores 0 before
    normalization.
    """

    def __init__(self, n_masks: int = 200, keep_prob: float = 0.5, normalize: bool = True):
        if n_masks < 1:
            raise ValueError("need at least one mask")
        if not 0.0 <= keep_prob <= 1.0:
            raise ValueError("keep_prob must lie in [0, 1]")
        self.n_masks = n_masks
        self.keep_prob = keep_prob
        self.normalize = normalize

    def explain(self, predictor, x, label, rng):
        f = n_features_of(x)
        masks = rng.random((self.n_masks, f)) < self.keep_prob
        scores = np.array([predictor.predict(keep_features(x, m))[label] for m in masks])
        hits = masks.sum(axis=0)
        raw = np.divide(scores @ masks, hits, out=np.zeros(f), where=hits > 0)
        return _finish(raw, self.normalize)


class ConstantAttributor:
    """Returns the same map for every input."""

    def __init__(self, attribution):
        self.attribution = np.asarray(attribution, dtype=np.float64).ravel()

    def explain(self, predictor, x, label, rng=None):
        if self.attribution.size != n_features_of(x):
            raise ValueError("constant map length differs from the input's feature count")
        return self.attribution.copy()


class HeavyTailAttributor:
    """Synthetic noisy explainer: a base map plus heavy-tailed jitter.

    Each score gets Student-t noise (``df`` degrees of freedom) scaled by
    ``scale``; with probability ``contamination`` it is replaced by a gross
    outlier drawn from N(0, outlier_scale^2) around the base score. Ignores
    the predictor, which makes it a ground-truth source for stability tests.
    """

    def __init__(self, base, scale=0.05, df=2.0, contamination=0.1, outlier_scale=1.0):
        self.base = np.asarray(base, dtype=np.float64).ravel()
        self.scale = scale
        self.df = df
        self.contamination = contamination
        self.outlier_scale = outlier_scale

    def explain(self, predictor, x, label, rng):
        f = self.base.size
        out = self.base + self.scale * rng.standard_t(self.df, f)
        gross = rng.random(f) < self.contamination
        out[gross] = self.base[gross] + rng.normal(0.0, self.outlier_scale, int(gross.sum()))
        return out


# -------------------------------------------------------------------- sampler


class SampleError(RuntimeError):
    def __init__(self, index, cause):
        self.index = index
        super().__init__(f"sample {index}: {type(cause).__name__}: {cause}")


def sample_explanations(
    predictor,
    attributor,
    x,
    spec: NoiseSpec,
    n: int,
    seed: int = 0,
    label: int | None = None,
    shape: tuple[int, int] | None = None,
) -> SampleMatrix:
    """Explain ``n`` noisy copies of ``x``; row i uses streams keyed (seed, i).

    The explained label is the predictor's top label on the clean input
    unless ``label`` is given.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if label is None:
        label = top_label(predictor, x)
    f = n_features_of(x)
    rows = np.empty((n, f))
    for i in range(n):
        try:
            noisy = spec.apply(x, stream(seed, i, 0))
            row = np.asarray(attributor.explain(predictor, noisy, label, stream(seed, i, 1)), dtype=np.float64)
        except SpecMismatch:
            raise
        except Exception as exc:
            raise SampleError(i, exc) from exc
        if row.shape != (f,):
            raise SampleError(i, ValueError(f"attribution has shape {row.shape}, expected ({f},)"))
        if not np.all(np.isfinite(row)):
            raise SampleError(i, ValueError("attribution contains non-finite scores"))
        rows[i] = row
    return SampleMatrix(rows, shape=shape)
