"""Median tests for feature attribution.

Exact binomial median tests over sampled explanations, significance and
trimmed-mean maps, and faithfulness / stability metrics.
"""

__version__ = "0.1.0"

from metfa.errors import (
    DegenerateInput,
    EmptyMask,
    EmptyTrim,
    FormatError,
    InsufficientSamples,
    MetfaError,
    NonFiniteValue,
    SpecMismatch,
    ZeroScore,
)
from metfa.stats import (
    ConfidenceIndices,
    TestConfig,
    binom_tail_geq,
    confidence_indices,
    min_samples,
    pvalue_median_eq,
    pvalue_median_geq,
    pvalue_median_leq,
    smoothgrad_asymptotic_ci,
)
from metfa.maps import (
    ConfidenceBundle,
    SampleMatrix,
    SignificanceMap,
    confidence_bundle,
    jenks_break,
    significance_map,
    smoothgrad_map,
    tie_break,
)

__all__ = [
    "__version__",
    "ConfidenceBundle",
    "ConfidenceIndices",
    "DegenerateInput",
    "EmptyMask",
    "EmptyTrim",
    "FormatError",
    "InsufficientSamples",
    "MetfaError",
    "NonFiniteValue",
    "SampleMatrix",
    "SignificanceMap",
    "SpecMismatch",
    "TestConfig",
    "ZeroScore",
    "binom_tail_geq",
    "confidence_bundle",
    "confidence_indices",
    "jenks_break",
    "min_samples",
    "pvalue_median_eq",
    "pvalue_median_geq",
    "pvalue_median_leq",
    "significance_map",
    "smoothgrad_asymptotic_ci",
    "smoothgrad_map",
    "tie_break",
]
