"""Coupled hitting-time audit of T(0,z) + T(z,y) >= T(0,y) on two presets."""

import argparse
import json

from brwre import presets
from brwre.cli import couple_audit

HORIZONS = {"exx-q1": 10, "d1-shape": 8}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--triples", type=int, default=1000)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for name, horizon in HORIZONS.items():
        rep = couple_audit(presets.build_preset(name), args.seeds, args.triples, 2, horizon, jobs=args.jobs)
        print(json.dumps({"preset": name, "horizon": horizon, "evaluated": rep["evaluated"],
                          "skipped": rep["skipped"], "violations": len(rep["violations"]),
                          "domination_violations": len(rep["domination_violations"])}))


if __name__ == "__main__":
    main()
