"""Command-line front end: sample -> test -> smooth -> metrics -> export.

Exit codes: 0 success, 2 usage or configuration error, 3 insufficient
samples, 4 metric undefined (zero target score).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from metfa import __version__
from metfa.errors import FormatError, InsufficientSamples, SpecMismatch, ZeroScore
from metfa.formats import export_map, read_pgm, read_sample_matrix, write_report, write_sample_matrix
from metfa.maps import (
    confidence_bundle,
    jenks_break,
    normalize_rows,
    significance_map,
    smoothgrad_map,
    tie_break,
)
from metfa import metrics as M
from metfa import sampling as S
from metfa.stats import min_samples

EXIT_OK, EXIT_USAGE, EXIT_INSUFFICIENT, EXIT_UNDEFINED = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -------------------------------------------------------------- flag parsing


def _alpha(text):
    a = float(text)
    if not 0.0 < a < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return a


def _shape(text):
    try:
        w, h = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like WxH, got {text!r}") from None
    return (w, h)


def resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get("METFA_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"METFA_SEED must be an integer, got {env!r}") from None


def build_predictor(text, n_features=None):
    kind, _, arg = text.partition(":")
    if kind == "linear":
        return S.LinearSoftmaxPredictor.from_file(arg)
    if kind == "planted":
        idx, _, link = arg.partition(":")
        if n_features is None:
            raise UsageError("planted predictor needs a numeric input")
        return S.PlantedPredictor([int(i) for i in idx.split(",")], n_features, link or "sigmoid")
    if kind == "token":
        return S.TokenPredictor.from_file(arg)
    if kind == "constant":
        return S.ConstantPredictor(float(arg) if arg else 0.5)
    raise UsageError(f"unknown predictor {text!r}")


def build_attributor(text, clean_map):
    kind, _, arg = text.partition(":")
    args = arg.split(":") if arg else []
    if kind == "occlusion":
        return S.OcclusionAttributor()
    if kind == "gradient":
        return S.GradientAttributor()
    if kind == "masking":
        n_masks = int(args[0]) if args else 200
        q = float(args[1]) if len(args) > 1 else 0.5
        return S.RandomMaskingAttributor(n_masks, q)
    if kind == "constant":
        return S.ConstantAttributor(clean_map)
    if kind == "heavytail":
        return S.HeavyTailAttributor(clean_map, scale=float(args[0]) if args else 0.05)
    raise UsageError(f"unknown attributor {text!r}")


def read_input(path, tokens):
    text = Path(path).read_text(encoding="utf-8")
    if tokens:
        return text.split()
    try:
        return np.array([float(t) for t in text.split()])
    except ValueError:
        raise UsageError(f"{path}: expected whitespace-separated numbers") from None


def read_map(path):
    if str(path).endswith(".pgm"):
        _, pixels = read_pgm(path)
        return np.frombuffer(pixels, dtype=np.uint8) / 255.0
    return read_input(path, tokens=False)


def _clean_map(x):
    # reference map for constant / synthetic attributors: the input itself, scaled
    if S.is_token_input(x):
        return np.linspace(1.0, 0.0, len(x))
    return normalize_rows(np.asarray(x, dtype=float).ravel())[0]


def _is_token_predictor(text):
    return text.startswith("token")


def _manifest(args, **resolved):
    config = {k: v for k, v in vars(args).items() if k != "func" and not k.startswith("out")}
    config.update(resolved)
    outputs = {k: v for k, v in vars(args).items() if k.startswith("out") and v is not None}
    return {"subcommand": args.command, "config": config, "outputs": outputs, "tool_version": __version__}


def _report(args, body, **resolved):
    report = {"tool": "metfa", "version": __version__, "manifest": _manifest(args, **resolved)}
    report.update(body)
    return report


# ---------------------------------------------------------------- subcommands


def cmd_minsamples(args):
    print(min_samples(args.alpha, args.sided))


def cmd_sample(args):
    seed = resolve_seed(args.seed)
    token = _is_token_predictor(args.predictor)
    x = read_input(args.input, token)
    n_features = None if token else x.size
    predictor = build_predictor(args.predictor, n_features)
    attributor = build_attributor(args.attributor, _clean_map(x))
    spec = S.parse_noise(args.noise)
    if args.shape and args.shape[0] * args.shape[1] != S.n_features_of(x):
        raise UsageError(f"shape {args.shape} does not match {S.n_features_of(x)} features")
    matrix = S.sample_explanations(predictor, attributor, x, spec, args.n, seed, shape=args.shape)
    write_sample_matrix(matrix, args.out)


def cmd_test(args):
    seed = resolve_seed(args.seed)
    matrix = read_sample_matrix(args.samples)
    if args.threshold == "jenks":
        h = jenks_break(matrix.values)
    else:
        try:
            h = float(args.threshold)
        except ValueError:
            raise UsageError(f"--threshold must be a number or 'jenks', got {args.threshold!r}") from None
    if args.out_map and matrix.shape is None:
        raise UsageError("--out-map needs a spatially shaped sample matrix")
    if not matrix.tie_broken and args.tie_break_variance > 0:
        matrix = tie_break(matrix, args.tie_break_variance, seed)
    sig = significance_map(matrix, h, args.alpha)
    if args.out_map:
        export_map(sig.labels, matrix.shape, args.out_map, mode="ternary")
    body = {
        "alpha": args.alpha,
        "n_samples": matrix.n_samples,
        "n_features": matrix.n_features,
        "threshold_h": h,
        "labels": sig.labels.tolist(),
        "counts": sig.counts.tolist(),
        "fraction_important": sig.fraction(1),
        "fraction_unimportant": sig.fraction(-1),
        "fraction_undecided": sig.fraction(0),
    }
    if args.out_report:
        write_report(_report(args, body, seed=seed, threshold_h=h), args.out_report)


def cmd_smooth(args):
    matrix = read_sample_matrix(args.samples)
    outs = [args.out_smoothed, args.out_lower, args.out_upper]
    if any(outs) and matrix.shape is None:
        raise UsageError("map outputs need a spatially shaped sample matrix")
    b = confidence_bundle(matrix, args.alpha, unit_range=args.unit_range)
    for values, path in zip((b.smoothed, b.lower, b.upper), outs):
        if path:
            export_map(values, matrix.shape, path)
    body = {
        "alpha": args.alpha,
        "n_samples": matrix.n_samples,
        "n_features": matrix.n_features,
        "k1": b.indices.k1,
        "k2": b.indices.k2,
        "smoothed": b.smoothed,
        "lower": b.lower,
        "upper": b.upper,
        "mean": smoothgrad_map(matrix),
    }
    if args.out_report:
        write_report(_report(args, body), args.out_report)


def cmd_metrics(args):
    seed = resolve_seed(args.seed)
    text = args.suite == "text"
    x = read_input(args.input, text)
    predictor = build_predictor(args.predictor, None if text else x.size)
    attribution = read_map(args.map)
    label = args.label if args.label is not None else S.top_label(predictor, x)
    spec = S.parse_noise(args.noise or ("none" if text else "normal:0.1"))
    if text:
        ns = [int(t) for t in args.n_words.split(",")]
        donor = read_input(args.donor, True) if args.donor else None
        rep = M.text_report(predictor, x, attribution, label, spec, ns, donor, args.draws, seed)
    else:
        rep = M.image_report(predictor, x, attribution, label, spec, args.draws, args.steps, seed)
    body = rep.to_dict()
    body["label"] = label
    print(" ".join(f"{k}={v:.6g}" for k, v in rep.values.items()))
    if args.out_report:
        write_report(_report(args, body, seed=seed, label=label), args.out_report)


def cmd_compare(args):
    seed = resolve_seed(args.seed)
    token = _is_token_predictor(args.predictor)
    x = read_input(args.input, token)
    predictor = build_predictor(args.predictor, None if token else x.size)
    attributor = build_attributor(args.attributor, _clean_map(x))
    inner, outer = S.parse_noise(args.inner_noise), S.parse_noise(args.outer_noise)
    res = M.compare_smoothing(predictor, attributor, x, inner, outer, args.n,
                              args.noisy_draws, args.alpha, seed)
    print(f"mstd_metfa={res['mstd_metfa']:.6g} mstd_mean={res['mstd_mean']:.6g} ratio={res['ratio']:.6g}")
    body = dict(res, inner_noise=inner.describe(), outer_noise=outer.describe())
    if args.out_report:
        write_report(_report(args, body, seed=seed), args.out_report)


# -------------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="metfa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"metfa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("minsamples", help="minimum sample count for a significance level")
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--sided", choices=("one", "two"), default="one")
    s.set_defaults(func=cmd_minsamples)

    s = sub.add_parser("sample", help="sample explanations around an input into a METF file")
    s.add_argument("--predictor", required=True, help="linear:W.txt | planted:0,1[:identity] | token:W.tsv | constant:c")
    s.add_argument("--attributor", required=True, help="occlusion | gradient | masking[:M[:q]] | constant | heavytail[:scale]")
    s.add_argument("--input", required=True)
    s.add_argument("--noise", default="normal:0.1")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--shape", type=_shape, default=None, help="spatial layout WxH")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("test", help="significance map from a METF file")
    s.add_argument("--samples", required=True)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--threshold", default="jenks", help="a score or 'jenks'")
    s.add_argument("--tie-break-variance", type=float, default=1e-6)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out-map")
    s.add_argument("--out-report")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("smooth", help="smoothed and bound maps from a METF file")
    s.add_argument("--samples", required=True)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--unit-range", action="store_true", help="scores live in [0, 1]; floor lower bound at 0")
    s.add_argument("--out-smoothed")
    s.add_argument("--out-lower")
    s.add_argument("--out-upper")
    s.add_argument("--out-report")
    s.set_defaults(func=cmd_smooth)

    s = sub.add_parser("metrics", help="faithfulness metrics of a map")
    s.add_argument("--predictor", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--map", required=True, help="whitespace-separated scores or a .pgm")
    s.add_argument("--noise", default=None, help="outer noise; default normal:0.1 (image), none (text)")
    s.add_argument("--draws", type=int, default=10)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--suite", choices=("image", "text"), default="image")
    s.add_argument("--label", type=int, default=None)
    s.add_argument("--n-words", default="1")
    s.add_argument("--donor")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out-report")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("compare", help="mstd of trimmed-mean vs. plain-mean smoothing")
    s.add_argument("--predictor", required=True)
    s.add_argument("--attributor", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--inner-noise", default="normal:0.1")
    s.add_argument("--outer-noise", default="normal:0.1")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--noisy-draws", type=int, default=10)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out-report")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags and 0 on --help / --version
        return int(exc.code or 0)
    try:
        args.func(args)
    except InsufficientSamples as exc:
        print(f"metfa: insufficient samples: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except ZeroScore as exc:
        print(f"metfa: metric undefined: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (UsageError, FormatError, SpecMismatch, ValueError, TypeError, OSError, S.SampleError) as exc:
        print(f"metfa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
