"""mstd of the trimmed-mean map over the plain-mean map on contaminated attributions.

Ratios below 1 mean the trimmed map moves less across outer-noise draws.

    python3 scripts/stability_ratio.py --trials 100 --n 30
"""

import argparse

import numpy as np

from metfa.metrics import compare_smoothing
from metfa.sampling import ConstantPredictor, HeavyTailAttributor, NoNoise


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--features", type=int, default=16)
    ap.add_argument("--noisy-draws", type=int, default=10)
    ap.add_argument("--contamination", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.2])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'contam':>7} {'mean ratio':>11} {'frac < 1':>9}")
    for c in args.contamination:
        ratios = []
        for t in range(args.trials):
            base = rng.random(args.features)
            att = HeavyTailAttributor(base, scale=0.05, contamination=c, outlier_scale=1.0)
            res = compare_smoothing(ConstantPredictor(), att, base, NoNoise(), NoNoise(),
                                    n=args.n, noisy_draws=args.noisy_draws, seed=args.seed * 100_003 + t)
            ratios.append(res["ratio"])
        ratios = np.array(ratios)
        print(f"{c:7.2f} {ratios.mean():11.3f} {np.mean(ratios < 1):9.2f}")


if __name__ == "__main__":
    main()
