import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from metfa.errors import FormatError, SpecMismatch
from metfa.sampling import (
    BrightnessNoise,
    ConstantAttributor,
    ConstantPredictor,
    GradientAttributor,
    HeavyTailAttributor,
    LinearSoftmaxPredictor,
    NoNoise,
    NormalNoise,
    OcclusionAttributor,
    PlantedPredictor,
    RandomMaskingAttributor,
    SampleError,
    SynonymNoise,
    TokenPredictor,
    UniformNoise,
    parse_noise,
    read_synonym_table,
    read_weight_file,
    sample_explanations,
    stream,
    write_weight_file,
)

sigmoid = lambda z: 1 / (1 + math.exp(-z))  # noqa: E731


# --------------------------------------------------------------------- noise


def test_uniform_noise_support():
    out = UniformNoise(-0.1, 0.1).apply(np.full(1000, 0.5), stream(1))
    assert out.min() >= 0.4 and out.max() <= 0.6


def test_brightness_identity_and_single_factor():
    x = np.array([0.2, 0.4, 0.8])
    assert np.array_equal(BrightnessNoise(1.0, 1.0).apply(x, stream(0)), x)
    out = BrightnessNoise(0.9, 1.1).apply(x, stream(4))
    ratios = out / x
    assert np.allclose(ratios, ratios[0])
    assert 0.9 <= ratios[0] <= 1.1


def test_synonym_substitution():
    spec = SynonymNoise(1.0, {"bad": "awful"})
    assert spec.apply(["bad", "movie"], stream(0)) == ["awful", "movie"]
    assert SynonymNoise(0.0, {"bad": "awful"}).apply(["bad"], stream(0)) == ["bad"]


def test_synonym_substitution_rate():
    spec = SynonymNoise(0.3, {"a": "b"})
    out = spec.apply(["a"] * 20_000, stream(8))
    assert out.count("b") / 20_000 == pytest.approx(0.3, abs=0.02)


@pytest.mark.parametrize("spec", [NormalNoise(0.1), UniformNoise(), BrightnessNoise()])
def test_spatial_noise_rejects_tokens(spec):
    with pytest.raises(SpecMismatch):
        spec.apply(["a", "b"], stream(0))


def test_token_noise_rejects_arrays():
    with pytest.raises(SpecMismatch):
        SynonymNoise(0.5).apply(np.zeros(3), stream(0))


def test_noise_spec_invariants():
    with pytest.raises(ValueError):
        NormalNoise(0.0)
    with pytest.raises(ValueError):
        UniformNoise(0.1, 0.1)
    with pytest.raises(ValueError):
        BrightnessNoise(0.0, 1.0)
    with pytest.raises(ValueError):
        SynonymNoise(1.5)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=2, max_side=6), elements=st.floats(0, 10)),
       st.integers(0, 2**32))
def test_noise_preserves_shape_and_sign(x, seed):
    for spec in (NormalNoise(0.1), UniformNoise()):
        assert spec.apply(x, stream(seed)).shape == x.shape
    out = BrightnessNoise().apply(x, stream(seed))
    assert out.shape == x.shape
    assert np.all(out >= 0)


def test_parse_noise(tmp_path):
    assert parse_noise("normal:0.2") == NormalNoise(0.2)
    assert parse_noise("uniform:-0.1:0.1") == UniformNoise(-0.1, 0.1)
    assert parse_noise("brightness") == BrightnessNoise(0.9, 1.1)
    assert isinstance(parse_noise("none"), NoNoise)
    table = tmp_path / "syn.tsv"
    table.write_text("bad\tawful\ngood\tfine\n", encoding="utf-8")
    spec = parse_noise(f"synonym:0.5:{table}")
    assert spec.table == {"bad": "awful", "good": "fine"} and spec.p == 0.5
    with pytest.raises(ValueError):
        parse_noise("poisson:1")


def test_synonym_table_format_error(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("no tab here\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_synonym_table(bad)


# ---------------------------------------------------------------- predictors


def test_planted_predictor_closed_form():
    p = PlantedPredictor([0, 1], 4)
    assert p.predict(np.ones(4))[1] == pytest.approx(0.731059, abs=1e-6)


def test_linear_zero_weights_uniform():
    p = LinearSoftmaxPredictor(np.zeros((3, 5)))
    assert np.allclose(p.predict(np.arange(5.0)), 1 / 3)


def test_token_predictor_closed_form():
    p = TokenPredictor({"bad": 5.0})
    assert p.predict(["bad", "movie"])[1] == pytest.approx(0.993307, abs=1e-6)


def test_weight_file_round_trip(tmp_path):
    w = np.array([[3.0, 1.0, 0.0, -0.5], [0.25, 0.0, 2.0, 1.0]])
    path = tmp_path / "w.txt"
    write_weight_file(w, path)
    assert np.array_equal(read_weight_file(path), w)
    assert path.read_text().splitlines()[0] == "P 2 4"


@pytest.mark.parametrize(
    "text", ["", "Q 1 2\n1 2\n", "P 2 2\n1 2\n", "P 1 2\n1 2 3\n", "P 1 2\n1 x\n", "P 1 1\nnan\n"]
)
def test_weight_file_malformed(tmp_path, text):
    path = tmp_path / "w.txt"
    path.write_text(text)
    with pytest.raises(FormatError):
        read_weight_file(path)


# --------------------------------------------------------------- attributors


def test_occlusion_on_planted_predictor():
    p = PlantedPredictor([0, 1], 4)
    raw = OcclusionAttributor(normalize=False).explain(p, np.ones(4), 1)
    assert raw[0] == pytest.approx(sigmoid(1) - sigmoid(0.5))
    assert min(raw[0], raw[1]) > max(raw[2], raw[3])
    assert raw[2] == raw[3] == 0.0


def test_gradient_on_linear_predictor():
    p = LinearSoftmaxPredictor(np.array([[3.0, 1.0, 0.0, 0.0]]))
    out = GradientAttributor().explain(p, np.ones(4), 0)
    assert np.allclose(out, [1, 1 / 3, 0, 0])


def test_gradient_needs_analytic_predictor():
    with pytest.raises(TypeError):
        GradientAttributor().explain(TokenPredictor({}), ["a"], 1)


def test_random_masking_keep_all_is_constant():
    p = PlantedPredictor([0], 3)
    out = RandomMaskingAttributor(n_masks=20, keep_prob=1.0).explain(p, np.ones(3), 1, stream(0))
    assert np.all(out == 0.5)


def test_random_masking_finds_planted_features():
    p = PlantedPredictor([0, 1], 6, link="identity")
    out = RandomMaskingAttributor(n_masks=400).explain(p, np.ones(6), 1, stream(2))
    assert out[:2].min() > out[2:].max()


def test_random_masking_needs_masks():
    with pytest.raises(ValueError):
        RandomMaskingAttributor(n_masks=0)


def test_token_occlusion():
    p = TokenPredictor({"bad": 5.0})
    out = OcclusionAttributor().explain(p, ["bad", "movie", "tonight"], 1)
    assert out.tolist() == [1.0, 0.0, 0.0]


reference_attributors = [
    OcclusionAttributor(),
    GradientAttributor(),
    RandomMaskingAttributor(n_masks=30),
]


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 8), elements=st.floats(-5, 5)), st.integers(0, 1000))
def test_reference_attributors_finite(x, seed):
    preds = [PlantedPredictor([0], x.size), LinearSoftmaxPredictor(np.arange(2 * x.size).reshape(2, -1) / 3)]
    for pred in preds:
        for att in reference_attributors:
            out = att.explain(pred, x, 1, stream(seed))
            assert out.shape == (x.size,)
            assert np.all(np.isfinite(out))
            assert out.min() >= 0 and out.max() <= 1


# ------------------------------------------------------------------- sampler


def test_single_zero_noise_sample_is_clean_attribution():
    p = PlantedPredictor([0, 2], 4)
    x = np.array([0.3, 0.1, 0.9, 0.2])
    m = sample_explanations(p, OcclusionAttributor(), x, NoNoise(), 1, seed=5)
    assert np.array_equal(m.values[0], OcclusionAttributor().explain(p, x, 1))


def test_constant_attributor_rows_identical():
    base = np.array([0.1, 0.7, 0.3])
    m = sample_explanations(ConstantPredictor(), ConstantAttributor(base), np.zeros(3), NormalNoise(0.5), 10)
    assert np.all(m.values == base)
    assert np.all(np.ptp(m.values, axis=0) == 0)


def test_linear_gradient_median_is_stable():
    p = PlantedPredictor([0, 1], 5, link="identity")
    x = np.full(5, 0.5)
    clean = GradientAttributor().explain(p, x, 1)
    m = sample_explanations(p, GradientAttributor(), x, UniformNoise(), 50, seed=3)
    assert np.all(np.abs(np.median(m.values, axis=0) - clean) <= 0.05)


def test_sampler_determinism_and_stream_independence():
    p = PlantedPredictor([0, 1], 6)
    x = np.linspace(0, 1, 6)
    att = RandomMaskingAttributor(n_masks=25)
    a = sample_explanations(p, att, x, NormalNoise(0.1), 8, seed=77)
    b = sample_explanations(p, att, x, NormalNoise(0.1), 8, seed=77)
    assert a == b
    # row i only depends on (seed, i): a longer run extends, never reshuffles
    longer = sample_explanations(p, att, x, NormalNoise(0.1), 12, seed=77)
    assert np.array_equal(longer.values[:8], a.values)
    assert not np.array_equal(a.values[0], a.values[1])


def test_sampler_fixes_clean_top_label():
    p = LinearSoftmaxPredictor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    x = np.array([0.51, 0.49])
    seen = []

    class Spy:
        def explain(self, predictor, xx, label, rng):
            seen.append(label)
            return np.zeros(2)

    sample_explanations(p, Spy(), x, NormalNoise(1.0), 20, seed=1)
    assert set(seen) == {0}


def test_sampler_annotates_failures():
    class Boom:
        def explain(self, predictor, x, label, rng):
            raise RuntimeError("kaput")

    with pytest.raises(SampleError) as info:
        sample_explanations(ConstantPredictor(), Boom(), np.zeros(2), NoNoise(), 3)
    assert info.value.index == 0


def test_heavy_tail_attributor_contamination():
    base = np.full(2000, 0.5)
    out = HeavyTailAttributor(base, scale=0.01, contamination=0.1, outlier_scale=10.0).explain(
        None, None, 0, stream(3))
    assert np.mean(np.abs(out - 0.5) > 1.0) == pytest.approx(0.1 * 0.92, abs=0.03)
