"""Censored mean hitting times on a ladder of horizons.

The 2-d recurrent preset plateaus; the infinite-mean model with a planted
trap keeps growing roughly linearly in the horizon.
"""

import argparse
import json

from brwre import estimators, presets
from brwre.environment import EnvironmentPatch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=1000)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--ladder", default="50,100,200,400,800")
    args = ap.parse_args()
    ladder = [int(x) for x in args.ladder.split(",")]
    q1 = estimators.estimate_mean_hitting(presets.exx_q1(), (1, 0), ladder, args.replicas)
    trap = EnvironmentPatch(presets.infexp_trap(depth=args.depth))
    inf = estimators.estimate_mean_hitting(presets.infexp(), (1,), ladder, args.replicas, patch=trap)
    print(json.dumps({"exx-q1": q1.as_dict(), "infexp+trap": inf.as_dict()}, indent=2))


if __name__ == "__main__":
    main()
