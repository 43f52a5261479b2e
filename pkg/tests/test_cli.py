import json

import numpy as np
import pytest

from metfa.cli import main
from metfa.formats import read_pgm, read_sample_matrix, write_sample_matrix
from metfa.maps import SampleMatrix


@pytest.fixture
def run(capsys):
    def _run(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    return _run


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ----------------------------------------------------------------- minsamples


@pytest.mark.parametrize("alpha,sided,want", [(0.05, "one", "5"), (0.05, "two", "6"), (0.5, "one", "1")])
def test_minsamples(run, alpha, sided, want):
    code, out, _ = run("minsamples", "--alpha", alpha, "--sided", sided)
    assert code == 0 and out.strip() == want


@pytest.mark.parametrize("alpha", ["0", "1", "1.5", "abc"])
def test_minsamples_bad_alpha(run, alpha):
    code, _, err = run("minsamples", "--alpha", alpha)
    assert code == 2 and "alpha" in err


# --------------------------------------------------------------------- sample


def test_sample_is_byte_identical_on_replay(run, tmp_path):
    x = write(tmp_path / "x.txt", "0.2 0.9 0.4 0.7")
    outs = []
    for name in ("a.metf", "b.metf"):
        code, _, _ = run("sample", "--predictor", "planted:0,1", "--attributor", "masking:40",
                         "--input", x, "--n", 12, "--seed", 5, "--shape", "2x2", "--out", tmp_path / name)
        assert code == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    m = read_sample_matrix(tmp_path / "a.metf")
    assert (m.n_samples, m.n_features, m.shape) == (12, 4, (2, 2))


def test_sample_constant_attributor_rows_identical(run, tmp_path):
    x = write(tmp_path / "x.txt", "1 3 2")
    run("sample", "--predictor", "constant:0.5", "--attributor", "constant", "--input", x,
        "--n", 6, "--out", tmp_path / "c.metf")
    v = read_sample_matrix(tmp_path / "c.metf").values
    assert np.all(v == v[0])


def test_sample_zero_noise_single_row(run, tmp_path):
    x = write(tmp_path / "x.txt", "1 1 1 1")
    run("sample", "--predictor", "planted:0,1:identity", "--attributor", "occlusion", "--input", x,
        "--noise", "none", "--n", 1, "--out", tmp_path / "o.metf")
    v = read_sample_matrix(tmp_path / "o.metf").values[0]
    assert v.tolist() == [1.0, 1.0, 0.0, 0.0]


def test_sample_seed_from_environment(run, tmp_path, monkeypatch):
    x = write(tmp_path / "x.txt", "0.2 0.9 0.4")
    base = ["sample", "--predictor", "planted:0", "--attributor", "masking:20", "--input", x, "--n", 5]
    run(*base, "--seed", 11, "--out", tmp_path / "flag.metf")
    monkeypatch.setenv("METFA_SEED", "11")
    run(*base, "--out", tmp_path / "env.metf")
    run(*base, "--seed", 12, "--out", tmp_path / "other.metf")
    assert (tmp_path / "flag.metf").read_bytes() == (tmp_path / "env.metf").read_bytes()
    assert (tmp_path / "other.metf").read_bytes() != (tmp_path / "env.metf").read_bytes()


def test_sample_bad_seed_env(run, tmp_path, monkeypatch):
    x = write(tmp_path / "x.txt", "0.2 0.9")
    monkeypatch.setenv("METFA_SEED", "many")
    code, _, err = run("sample", "--predictor", "planted:0", "--attributor", "occlusion",
                       "--input", x, "--out", tmp_path / "s.metf")
    assert code == 2 and "METFA_SEED" in err


@pytest.mark.parametrize("attributor", ["lime", "masking:x"])
def test_sample_unknown_attributor(run, tmp_path, attributor):
    x = write(tmp_path / "x.txt", "0.2 0.9")
    code, _, _ = run("sample", "--predictor", "planted:0", "--attributor", attributor,
                     "--input", x, "--out", tmp_path / "s.metf")
    assert code == 2


def test_sample_spatial_noise_on_tokens(run, tmp_path):
    w = write(tmp_path / "w.tsv", "bad\t5\n")
    x = write(tmp_path / "x.txt", "bad movie")
    code, _, err = run("sample", "--predictor", f"token:{w}", "--attributor", "occlusion",
                       "--input", x, "--noise", "normal:0.1", "--out", tmp_path / "s.metf")
    assert code == 2


# ----------------------------------------------------------------------- test


def samples(tmp_path, values, shape=None, name="m.metf"):
    path = tmp_path / name
    write_sample_matrix(SampleMatrix(np.asarray(values, dtype=float), shape=shape), path)
    return path


def test_test_labels_and_ternary_map(run, tmp_path):
    vals = np.column_stack([np.full(10, 0.9), np.full(10, 0.1)])
    path = samples(tmp_path, vals, shape=(2, 1))
    code, _, _ = run("test", "--samples", path, "--threshold", 0.5, "--out-map", tmp_path / "s.pgm",
                     "--out-report", tmp_path / "r.json")
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["labels"] == [1, -1]
    assert rep["manifest"]["subcommand"] == "test"
    assert rep["manifest"]["config"]["alpha"] == 0.05
    assert read_pgm(tmp_path / "s.pgm") == ((2, 1), bytes([255, 0]))


def test_test_jenks_threshold(run, tmp_path):
    path = samples(tmp_path, np.array([1, 1, 2, 8, 9, 9.0])[:, None])
    code, _, _ = run("test", "--samples", path, "--out-report", tmp_path / "r.json")
    assert code == 0
    assert json.loads((tmp_path / "r.json").read_text())["threshold_h"] == 5.0


def test_test_insufficient_samples(run, tmp_path):
    code, _, err = run("test", "--samples", samples(tmp_path, np.zeros((4, 2))), "--threshold", 0.5)
    assert code == 3 and "insufficient" in err


def test_test_out_map_needs_shape(run, tmp_path):
    code, _, _ = run("test", "--samples", samples(tmp_path, np.zeros((6, 2))), "--threshold", 0.5,
                     "--out-map", tmp_path / "s.pgm")
    assert code == 2


def test_test_corrupt_file(run, tmp_path):
    bad = tmp_path / "bad.metf"
    bad.write_bytes(b"XETF" + bytes(20))
    code, _, err = run("test", "--samples", bad)
    assert code == 2 and "magic" in err


# --------------------------------------------------------------------- smooth


def test_smooth_staircase(run, tmp_path):
    path = samples(tmp_path, (np.arange(10) / 10)[:, None], shape=(1, 1))
    code, _, _ = run("smooth", "--samples", path, "--out-report", tmp_path / "r.json",
                     "--out-smoothed", tmp_path / "s.pgm", "--out-lower", tmp_path / "l.pgm",
                     "--out-upper", tmp_path / "u.pgm")
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    # METF payloads are float32
    assert rep["smoothed"][0] == pytest.approx(0.4, abs=1e-7)
    assert rep["lower"] == [0.0]
    assert rep["upper"][0] == pytest.approx(0.8, abs=1e-7)
    assert (rep["k1"], rep["k2"]) == (1, 9)
    assert read_pgm(tmp_path / "u.pgm")[1] == bytes([204])


def test_smooth_constant_matrix_identical_maps(run, tmp_path):
    path = samples(tmp_path, np.full((10, 4), 0.25), shape=(2, 2))
    outs = [tmp_path / f"{n}.pgm" for n in "slu"]
    run("smooth", "--samples", path, "--out-smoothed", outs[0], "--out-lower", outs[1], "--out-upper", outs[2])
    assert outs[0].read_bytes() == outs[1].read_bytes() == outs[2].read_bytes()


def test_smooth_insufficient(run, tmp_path):
    code, _, _ = run("smooth", "--samples", samples(tmp_path, np.zeros((5, 2))))
    assert code == 3


# -------------------------------------------------------------------- metrics


def test_metrics_constant_predictor(run, tmp_path):
    x = write(tmp_path / "x.txt", "1 2 3 4")
    m = write(tmp_path / "m.txt", "0.4 0.3 0.2 0.1")
    code, _, _ = run("metrics", "--predictor", "constant:0.3", "--input", x, "--map", m,
                     "--steps", 4, "--out-report", tmp_path / "r.json")
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["metrics"]["insertion"] == 1.0 and rep["metrics"]["deletion"] == 1.0
    assert rep["metrics"]["overall"] == 0.0


def test_metrics_planted(run, tmp_path):
    x = write(tmp_path / "x.txt", "1 1 1 1")
    m = write(tmp_path / "m.txt", "1 1 0 0")
    code, out, _ = run("metrics", "--predictor", "planted:0,1:identity", "--input", x, "--map", m,
                       "--steps", 4, "--noise", "none", "--label", 1, "--out-report", tmp_path / "r.json")
    assert code == 0
    got = json.loads((tmp_path / "r.json").read_text())["metrics"]
    assert got["insertion"] == 0.7 and got["deletion"] == 0.3
    assert got["ri"] == got["insertion"]
    assert "insertion=0.7" in out


def test_metrics_pgm_map(run, tmp_path):
    from metfa.formats import export_map

    x = write(tmp_path / "x.txt", "1 1 1 1")
    export_map([1, 1, 0, 0], (2, 2), tmp_path / "m.pgm")
    code, out, _ = run("metrics", "--predictor", "planted:0,1:identity", "--input", x,
                       "--map", tmp_path / "m.pgm", "--steps", 4, "--noise", "none", "--label", 1)
    assert code == 0 and "insertion=0.7" in out


def test_metrics_zero_score(run, tmp_path):
    x = write(tmp_path / "x.txt", "0 0 0 0")
    m = write(tmp_path / "m.txt", "1 1 0 0")
    code, _, err = run("metrics", "--predictor", "planted:0,1:identity", "--input", x, "--map", m,
                       "--label", 1, "--steps", 4)
    assert code == 4 and "undefined" in err


def test_metrics_text_suite(run, tmp_path):
    w = write(tmp_path / "w.tsv", "bad\t5\n")
    x = write(tmp_path / "x.txt", "bad movie tonight")
    m = write(tmp_path / "m.txt", "0.9 0.2 0.1")
    code, _, _ = run("metrics", "--suite", "text", "--predictor", f"token:{w}", "--input", x,
                     "--map", m, "--n-words", "1", "--out-report", tmp_path / "r.json")
    assert code == 0
    got = json.loads((tmp_path / "r.json").read_text())["metrics"]
    assert got["fdt[1]"] == pytest.approx(0.5)
    assert got["rfdt[1]"] == got["fdt[1]"]


# -------------------------------------------------------------------- compare


def test_compare_constant_attributor_undefined(run, tmp_path):
    x = write(tmp_path / "x.txt", "0.1 0.5 0.9")
    code, _, _ = run("compare", "--predictor", "constant", "--attributor", "constant", "--input", x,
                     "--noisy-draws", 3, "--out-report", tmp_path / "r.json")
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["ratio"] == "undefined"
    assert rep["mstd_metfa"] == 0.0 and rep["mstd_mean"] == 0.0


def test_compare_seed_replay(run, tmp_path):
    x = write(tmp_path / "x.txt", "0.1 0.5 0.9 0.3")
    argv = ["compare", "--predictor", "planted:0,2", "--attributor", "heavytail", "--input", x,
            "--n", 30, "--noisy-draws", 4, "--seed", 3]
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        run(*argv, "--out-report", tmp_path / d / "r.json")
    a = (tmp_path / "a" / "r.json").read_text()
    b = (tmp_path / "b" / "r.json").read_text()
    assert a.replace(f"{tmp_path}/a", "") == b.replace(f"{tmp_path}/b", "")
    assert json.loads(a)["ratio"] == json.loads(b)["ratio"]
