"""Faithfulness, robust faithfulness and stability metrics.

Insertion / deletion curves are Riemann means over K + 1 evenly spaced
fractions ``0, 1/K, ..., 1`` (both endpoints included). At fraction s/K the
top ``floor(s * F / K)`` features are kept (insertion) or zeroed (deletion).
Feature ranking is by descending score, ties by ascending index, so every
metric depends on the map only through that ranking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from metfa.errors import EmptyMask, ZeroScore
from metfa.maps import confidence_bundle, smoothgrad_map
from metfa.sampling import NoiseSpec, sample_explanations, stream, top_label

ZERO_SCORE_EPS = 1e-9


def rank_features(attribution) -> np.ndarray:
    """Feature indices from most to least important."""
    a = np.asarray(attribution, dtype=np.float64).ravel()
    return np.argsort(-a, kind="stable")


def _target_score(predictor, x, label) -> float:
    s = float(predictor.predict(x)[label])
    if s <= ZERO_SCORE_EPS:
        raise ZeroScore(f"score of label {label} is {s:.3g}; cannot normalize")
    return s


def _curve(predictor, x, attribution, label, steps, insert):
    if steps < 1:
        raise ValueError("steps must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    f = flat.size
    order = rank_features(attribution)
    if order.size != f:
        raise ValueError("attribution length differs from the input's feature count")
    norm = _target_score(predictor, x, label)
    total = 0.0
    for s in range(steps + 1):
        top = order[: s * f // steps]
        if insert:
            cur = np.zeros(f)
            cur[top] = flat[top]
        else:
            cur = flat.copy()
            cur[top] = 0.0
        total += float(predictor.predict(cur.reshape(x.shape))[label])
    return total / (steps + 1) / norm


def insertion(predictor, x, attribution, label: int, steps: int = 100) -> float:
    """Normalized area under the keep-top-features curve, starting from zeros."""
    return _curve(predictor, x, attribution, label, steps, insert=True)


def deletion(predictor, x, attribution, label: int, steps: int = 100) -> float:
    """Normalized area under the zero-top-features curve, starting from x."""
    return _curve(predictor, x, attribution, label, steps, insert=False)


def overall(insertion_value: float, deletion_value: float) -> float:
    return insertion_value - deletion_value


def _noisy_inputs(x, spec: NoiseSpec, draws: int, seed: int):
    if draws < 1:
        raise ValueError("draws must be at least 1")
    for d in range(draws):
        yield d, spec.apply(x, stream(seed, d))


def _robust(metric, predictor, x, spec, draws, seed, *args, **kw):
    vals = []
    for d, noisy in _noisy_inputs(x, spec, draws, seed):
        try:
            vals.append(metric(predictor, noisy, *args, **kw))
        except ZeroScore as exc:
            raise ZeroScore(f"noise draw {d}: {exc}") from exc
    return float(np.mean(vals))


def robust_insertion(predictor, x, attribution, label, spec, draws=10, steps=100, seed=0) -> float:
    """Mean insertion over ``draws`` noisy copies of x; the map stays fixed."""
    return _robust(insertion, predictor, x, spec, draws, seed, attribution, label, steps)


def robust_deletion(predictor, x, attribution, label, spec, draws=10, steps=100, seed=0) -> float:
    return _robust(deletion, predictor, x, spec, draws, seed, attribution, label, steps)


def robust_overall(ri: float, rd: float) -> float:
    return ri - rd


# ------------------------------------------------------------------ stability


def mstd(explanations) -> float:
    """Mean over inputs and features of the population std across noisy draws.

    ``explanations`` holds one ``(n_noisy, n_features)`` block per input;
    blocks may differ in feature count.
    """
    if isinstance(explanations, np.ndarray) and explanations.ndim == 2:
        explanations = [explanations]
    blocks = [np.asarray(b, dtype=np.float64) for b in explanations]
    if not blocks:
        raise ValueError("no explanations given")
    stds = []
    for b in blocks:
        if b.ndim != 2 or b.shape[0] < 2:
            raise ValueError("each input needs at least 2 noisy explanations")
        # centring on one row makes identical draws give exactly zero;
        # per-column scaling keeps tiny spreads from underflowing when squared
        d = b - b[0]
        scale = np.abs(d).max(axis=0)
        scale[scale == 0] = 1.0
        stds.append(scale * (d / scale).std(axis=0))
    return float(np.concatenate(stds).mean())


# ---------------------------------------------------------------- text suite


def _top_positions(attribution, n, length):
    a = np.asarray(attribution, dtype=np.float64).ravel()
    if a.size != length:
        raise ValueError("attribution length differs from sequence length")
    if not 1 <= n <= length:
        raise ValueError(f"n={n} outside [1, {length}]")
    return set(rank_features(a)[:n].tolist())


def fdt(predictor, tokens, attribution, n, label, mode="remove", mask_token="<pad>") -> float:
    """Score after deleting the n top-ranked tokens.

    ``mode="mask"`` substitutes ``mask_token`` instead of shortening the
    sequence, for predictors that need a fixed length.
    """
    top = _top_positions(attribution, n, len(tokens))
    if mode == "remove":
        kept = [t for i, t in enumerate(tokens) if i not in top]
    elif mode == "mask":
        kept = [mask_token if i in top else t for i, t in enumerate(tokens)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(predictor.predict(kept)[label])


def fat(predictor, tokens, attribution, n, label, donor) -> float:
    """Score after keeping the top n tokens and filling other slots from donor."""
    if len(donor) < len(tokens):
        raise ValueError("donor sequence is shorter than the explained sequence")
    top = _top_positions(attribution, n, len(tokens))
    mixed = [t if i in top else donor[i] for i, t in enumerate(tokens)]
    return float(predictor.predict(mixed)[label])


def st(predictor, tokens, attribution, n, label) -> float:
    """Score of the sequence reduced to its top n tokens, order preserved."""
    top = _top_positions(attribution, n, len(tokens))
    return float(predictor.predict([t for i, t in enumerate(tokens) if i in top])[label])


def robust_fdt(predictor, tokens, attribution, n, label, spec, draws=10, seed=0, **kw) -> float:
    return _robust(fdt, predictor, tokens, spec, draws, seed, attribution, n, label, **kw)


def robust_fat(predictor, tokens, attribution, n, label, donor, spec, draws=10, seed=0) -> float:
    return _robust(fat, predictor, tokens, spec, draws, seed, attribution, n, label, donor)


def robust_st(predictor, tokens, attribution, n, label, spec, draws=10, seed=0) -> float:
    return _robust(st, predictor, tokens, spec, draws, seed, attribution, n, label)


# ------------------------------------------------------- segmentation context


def context_bias_faithfulness(segmenter, x, region, explanation) -> float:
    """Share of the segmentation score kept when x is masked to region ∪ explanation.

    ``segmenter(x)`` returns per-feature scores shaped like x; region and
    explanation are binary masks of the same shape. Score increases after
    masking count as no drop.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(region, dtype=np.float64)
    m = np.asarray(explanation, dtype=np.float64)
    if r.shape != x.shape or m.shape != x.shape:
        raise ValueError("masks must match the input shape")
    area = r.sum()
    if area == 0:
        raise EmptyMask("segmentation region is empty")
    drop = r * (np.asarray(segmenter(x)) - np.asarray(segmenter(np.maximum(r, m) * x)))
    return float(1.0 - np.maximum(drop, 0.0).sum() / area)


def robust_context_bias_faithfulness(segmenter, x, region, explanation, spec, draws=10, seed=0) -> float:
    vals = [context_bias_faithfulness(segmenter, noisy, region, explanation)
            for _, noisy in _noisy_inputs(x, spec, draws, seed)]
    return float(np.mean(vals))


# -------------------------------------------------------------------- report


@dataclass
class MetricsReport:
    """Named metric values plus the provenance of the robust ones."""

    values: dict = field(default_factory=dict)
    noise: dict | None = None
    draws: int | None = None
    seed: int | None = None

    def __setitem__(self, key, value):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError(f"metric {key} is not finite")
        self.values[key] = v

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        d = {"metrics": dict(self.values)}
        if self.noise is not None:
            d["noise"] = self.noise
        if self.draws is not None:
            d["draws"] = self.draws
        if self.seed is not None:
            d["seed"] = self.seed
        return d


def image_report(predictor, x, attribution, label, spec, draws=10, steps=100, seed=0) -> MetricsReport:
    rep = MetricsReport(noise=spec.describe(), draws=draws, seed=seed)
    rep["insertion"] = ins = insertion(predictor, x, attribution, label, steps)
    rep["deletion"] = dele = deletion(predictor, x, attribution, label, steps)
    rep["overall"] = overall(ins, dele)
    rep["ri"] = ri = robust_insertion(predictor, x, attribution, label, spec, draws, steps, seed)
    rep["rd"] = rd = robust_deletion(predictor, x, attribution, label, spec, draws, steps, seed)
    rep["ro"] = robust_overall(ri, rd)
    return rep


def text_report(predictor, tokens, attribution, label, spec, ns: Sequence[int], donor=None,
                draws=10, seed=0) -> MetricsReport:
    rep = MetricsReport(noise=spec.describe(), draws=draws, seed=seed)
    for n in ns:
        rep[f"fdt[{n}]"] = fdt(predictor, tokens, attribution, n, label)
        rep[f"st[{n}]"] = st(predictor, tokens, attribution, n, label)
        rep[f"rfdt[{n}]"] = robust_fdt(predictor, tokens, attribution, n, label, spec, draws, seed)
        rep[f"rst[{n}]"] = robust_st(predictor, tokens, attribution, n, label, spec, draws, seed)
        if donor is not None:
            rep[f"fat[{n}]"] = fat(predictor, tokens, attribution, n, label, donor)
            rep[f"rfat[{n}]"] = robust_fat(predictor, tokens, attribution, n, label, donor, spec, draws, seed)
    return rep


# ------------------------------------------------- smoothing stability compare


def compare_smoothing(predictor, attributor, x, inner, outer, n=10, noisy_draws=10,
                      alpha=0.05, seed=0, label=None) -> dict:
    """mstd of the trimmed-mean map vs. the plain-mean map under outer noise.

    For each outer draw d, one set of ``n`` inner-noise explanations around
    the perturbed input feeds both estimators, so they see the same samples.
    The ratio is NaN when the plain-mean mstd is zero.
    """
    if label is None:
        label = top_label(predictor, x)
    trimmed, plain = [], []
    for d in range(noisy_draws):
        noisy = outer.apply(x, stream(seed, 1, d))
        inner_seed = int(np.random.SeedSequence([seed, 2, d]).generate_state(1)[0])
        samples = sample_explanations(predictor, attributor, noisy, inner, n, inner_seed, label=label)
        trimmed.append(confidence_bundle(samples, alpha).smoothed)
        plain.append(smoothgrad_map(samples))
    m_trim = mstd([np.vstack(trimmed)])
    m_plain = mstd([np.vstack(plain)])
    ratio = m_trim / m_plain if m_plain > 0 else float("nan")
    return {"mstd_metfa": m_trim, "mstd_mean": m_plain, "ratio": ratio}
