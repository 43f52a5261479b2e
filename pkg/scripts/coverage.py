"""Empirical coverage of the median confidence interval.

    python3 scripts/coverage.py --n 20 --trials 10000 --alpha 0.05
"""

import argparse

import numpy as np

from metfa.maps import SampleMatrix, confidence_bundle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[10, 20, 40, 80])
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--dist", choices=("normal", "exponential", "cauchy"), default="normal")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    draw = {
        "normal": lambda shape: (rng.normal(0.5, 0.1, shape), 0.5),
        "exponential": lambda shape: (rng.exponential(1.0, shape), np.log(2.0)),
        "cauchy": lambda shape: (rng.standard_cauchy(shape), 0.0),
    }[args.dist]
    print(f"{'N':>5} {'k1':>4} {'k2':>4} {'coverage':>9} {'mean width':>11}")
    for n in args.n:
        values, median = draw((n, args.trials))
        b = confidence_bundle(SampleMatrix(values), args.alpha)
        hit = (b.lower <= median) & (median <= b.upper)
        print(f"{n:5d} {b.indices.k1:4d} {b.indices.k2:4d} {hit.mean():9.4f} {np.mean(b.upper - b.lower):11.4f}")


if __name__ == "__main__":
    main()
