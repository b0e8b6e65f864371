"""Directional radii of B_n for the one-dimensional shape model over a range of alpha.

The limit radius in both directions is 2 - alpha.
"""

import argparse
import csv
from fractions import Fraction

from brwre import estimators, presets


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--time", type=int, default=200)
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--out", default="shape_d1.csv")
    args = ap.parse_args()
    rows = []
    for k in range(1, 10):
        alpha = Fraction(k, 10)
        est = estimators.estimate_shape(presets.d1_shape(alpha), args.time, args.replicas, mode=estimators.ANNEALED)
        right, left = est.radii["B"].mean(axis=0)
        rows.append((float(alpha), right, left, float(2 - alpha)))
        print(f"alpha={float(alpha):.1f} right={right:.4f} left={left:.4f} limit={float(2 - alpha):.4f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "right", "left", "limit"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
