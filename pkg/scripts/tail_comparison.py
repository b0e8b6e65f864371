"""Quenched survival curves of the hitting time: planted trap in d=1 against the 2-d recurrent preset."""

import argparse
import json
from fractions import Fraction

from brwre import estimators, presets
from brwre.environment import EnvironmentPatch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=2000)
    ap.add_argument("--depth", type=int, default=8)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    p = Fraction(1, 100)
    trap = EnvironmentPatch(presets.qdecay_trap(p, args.depth))
    c1 = estimators.estimate_tail(presets.qdecay(p), (1,), estimators.geometric_grid(2000, 25), args.replicas,
                                  mode=estimators.QUENCHED, patch=trap, jobs=args.jobs)
    c2 = estimators.estimate_tail(presets.exx_q1(), (1, 0), estimators.geometric_grid(200, 25), args.replicas,
                                  mode=estimators.QUENCHED, jobs=args.jobs)
    c1.write_csv("tail_qdecay_trap.csv")
    c2.write_csv("tail_q1.csv")
    print(json.dumps(estimators.compare_tails(c1, 1, c2, 2), indent=2))


if __name__ == "__main__":
    main()
