"""Print the classification verdict and certificates of every preset."""

import json

from brwre import criteria, presets


def main():
    for name in sorted(presets.PRESETS):
        out = criteria.classify(presets.build_preset(name))
        rec = out.recurrence
        line = {"preset": name, "verdict": out.verdict, "recurrence": rec.kind if rec else None}
        if out.condition_L is not None:
            c = out.condition_L
            line["s"] = list(c.direction or c.s)
            line["lambda"] = str(c.lam_exact if c.lam_exact is not None else c.lam)
        print(json.dumps(line, default=str))


if __name__ == "__main__":
    main()
