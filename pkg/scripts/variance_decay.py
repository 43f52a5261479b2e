"""Variance of the smoothed score as N grows, with the fitted log-log slope.

    python3 scripts/variance_decay.py --trials 1000
"""

import argparse

import numpy as np

from metfa.maps import SampleMatrix, confidence_bundle, smoothgrad_map


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[10, 20, 40, 80, 160, 320, 640])
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    trimmed, plain = [], []
    print(f"{'N':>5} {'var(trimmed)':>13} {'var(mean)':>11}")
    for n in args.n:
        m = SampleMatrix(rng.exponential(1.0, (n, args.trials)))
        trimmed.append(np.var(confidence_bundle(m, args.alpha).smoothed))
        plain.append(np.var(smoothgrad_map(m)))
        print(f"{n:5d} {trimmed[-1]:13.3e} {plain[-1]:11.3e}")
    logn = np.log(args.n)
    print(f"slope trimmed {np.polyfit(logn, np.log(trimmed), 1)[0]:.3f}")
    print(f"slope mean    {np.polyfit(logn, np.log(plain), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
