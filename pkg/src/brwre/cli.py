"""Command-line entry point.

Exit codes: 0 on success, 2 on input errors (bad flags, invalid models,
malformed rationals), 3 when counts exceed what the sampling mode supports.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import coupling, criteria, estimators, induced, presets
from .environment import EnvironmentPatch, EnvironmentRealization
from .model import ModelValidationError, dump_model, format_fraction, law_to_document, load_model, parse_fraction
from .simulator import SaturationOverflow, SimConfig, run, write_trajectory

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

PRESET_FLAGS = {"alpha": parse_fraction, "a": parse_fraction, "p": parse_fraction, "alpha1": parse_fraction,
                "alpha2": parse_fraction, "n_min": int, "n_max": int}
TRAPS = {"qdecay": presets.qdecay_trap, "infexp": presets.infexp_trap}


class InputError(Exception):
    pass


def _rational(text: str) -> Fraction:
    try:
        return parse_fraction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _site(text: str) -> tuple:
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad site {text!r}; expected comma-separated integers") from None


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2, default=str)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# ------------------------------------------------------------------ models


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=sorted(presets.PRESETS))
    g.add_argument("--model", help="model file (JSON)")
    for name, kind in PRESET_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=_rational if kind is parse_fraction else int)


def _law_from_args(args):
    if args.model:
        return load_model(args.model)
    params = {k: getattr(args, k) for k in PRESET_FLAGS if getattr(args, k, None) is not None}
    try:
        return presets.build_preset(args.preset, **params)
    except TypeError as exc:
        raise InputError(str(exc)) from None


def _add_seed_args(p, horizon=100):
    p.add_argument("--env-seed", type=int, default=0)
    p.add_argument("--walk-seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=horizon)
    p.add_argument("--out")


def _add_sim_mode(p, flag="--mode", default="residual"):
    p.add_argument(flag, dest="sim_mode", choices=["exact", "residual"], default=default)


def _trap_patch(args):
    if not getattr(args, "trap", None):
        return None
    p = args.p if args.p is not None else presets.PRESETS[args.trap].params["p"]
    return EnvironmentPatch(TRAPS[args.trap](p, args.depth))


# ---------------------------------------------------------------- commands


def cmd_check(args) -> int:
    law = _law_from_args(args)
    report = criteria.classify(law).as_dict()
    _emit(report, args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    law = _law_from_args(args)
    if args.out:
        dump_model(law, args.out)
    else:
        print(json.dumps(law_to_document(law), indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    law = _law_from_args(args)
    env = EnvironmentRealization(law, args.env_seed, _trap_patch(args))
    cfg = SimConfig(mode=args.sim_mode, horizon=args.horizon, walk_seed=args.walk_seed, window=args.window,
                    residual_threshold=args.residual_threshold, count_cap=args.count_cap)
    res = run(env, cfg, (0,) * law.dimension, keep_sets=False)
    if args.out:
        write_trajectory(res.records, args.out, res.mode)
    last = res.records[-1]
    print(f"n={last.n} total={last.total} occupied={last.occupied} visited={last.visited} "
          f"saturated={last.saturated} mode={res.mode}")
    return EXIT_OK


def cmd_hitting(args) -> int:
    law = _law_from_args(args)
    target = args.target
    if len(target) != law.dimension:
        raise InputError(f"target {target} has the wrong dimension")
    patch = _trap_patch(args)
    hits, sat = estimators.hitting_times(law, target, args.replicas, args.horizon, args.mode, args.env_seed,
                                         args.walk_seed, None, patch, args.sim_mode, args.jobs)
    grid = estimators.geometric_grid(args.horizon, args.points)
    curve = estimators.tail_from_hits(hits, grid, target, args.mode, args.env_seed, sat)
    if args.out:
        curve.write_csv(args.out)
    diag = estimators.tail_diagnostic(curve, law.dimension).as_dict()
    summary = {"replicas": args.replicas, "censored": curve.censored, "saturated": sat, "diagnostic": diag}
    if args.ladder:
        summary["mean_ladder"] = estimators.mean_ladder_from_hits(hits, args.ladder).as_dict()
    print(json.dumps(summary, default=str))
    return EXIT_OK


def cmd_shape(args) -> int:
    law = _law_from_args(args)
    try:
        est = estimators.estimate_shape(law, args.time, args.replicas, args.directions, args.variants.split(","),
                                        args.mode, args.env_seed, args.walk_seed, args.window, args.sim_mode)
    except (estimators.ConditionAMissing, estimators.ConditionUEMissing) as exc:
        raise InputError(str(exc)) from None
    if args.out:
        est.write_csv(args.out)
    print(json.dumps({"time": est.time, "replicas": est.replicas, "radii": est.summary(),
                      "directions": est.directions.tolist(), "convexity_defect": est.convexity_defect}))
    return EXIT_OK


def _couple_task(task):
    law, env_seed, draw_seed, box, horizon, triples = task
    env = EnvironmentRealization(law, env_seed)
    fam = coupling.coupled_run(env, draw_seed, box, horizon)
    return coupling.subadditivity_audit(fam, triples).as_dict()


def couple_audit(law, seeds: int, triples: int, radius: int, horizon: int, seed: int = 0, jobs: int = 1) -> dict:
    """Subadditivity and domination audit over ``seeds`` (env, draw) pairs."""
    box = list(itertools.product(range(-radius, radius + 1), repeat=law.dimension))
    g = np.random.default_rng(seed)
    tasks = []
    for k in range(seeds):
        i = g.integers(0, len(box), (triples, 2))
        trip = [(box[a], box[b]) for a, b in i]
        starts = sorted({z for z, _ in trip})
        tasks.append((law, estimators.rng.derive_seed(seed, 3, k), estimators.rng.derive_seed(seed, 4, k),
                      starts, horizon, trip))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            reports = list(ex.map(_couple_task, tasks))
    else:
        reports = [_couple_task(t) for t in tasks]
    return {"seed_pairs": seeds, "triples_per_pair": triples, "horizon": horizon,
            "evaluated": sum(r["evaluated"] for r in reports), "skipped": sum(r["skipped"] for r in reports),
            "violations": [v for r in reports for v in r["violations"]],
            "domination_violations": [v for r in reports for v in r["domination_violations"]]}


def cmd_couple(args) -> int:
    law = _law_from_args(args)
    try:
        rep = couple_audit(law, args.seeds, args.triples, args.radius, args.horizon, args.env_seed, args.jobs)
    except coupling.PopulationCapExceeded as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    _emit(rep, args.out)
    print(f"evaluated={rep['evaluated']} violations={len(rep['violations'])} "
          f"domination_violations={len(rep['domination_violations'])}", file=sys.stderr)
    return EXIT_OK


def cmd_seed_audit(args) -> int:
    law, patch, W = presets.synthetic_seed(args.rho, args.eps)
    rep = estimators.seed_audit(law, EnvironmentPatch(patch), W, args.replicas, args.walk_seed)
    _emit(rep.as_dict(), args.out)
    return EXIT_OK


def cmd_supermartingale(args) -> int:
    law = _law_from_args(args)
    if args.s is None or args.lam is None:
        cert = criteria.condition_L_search(law)
        if cert is None:
            raise InputError("no Condition L certificate found; pass --s and --lambda")
        s = cert.direction if cert.direction is not None else cert.s
        lam = cert.lam_exact if cert.lam_exact is not None else cert.lam
    else:
        s, lam = args.s, args.lam
    try:
        rep = estimators.supermartingale_audit(law, s, lam, args.horizon, args.replicas, args.mode, args.env_seed,
                                               args.walk_seed, sim_mode=args.sim_mode)
    except estimators.CertificateInvalid as exc:
        raise InputError(str(exc)) from None
    out = rep.as_dict()
    out["s"] = [str(c) for c in s]
    out["lambda"] = format_fraction(lam) if isinstance(lam, Fraction) else float(lam)
    _emit(out, args.out)
    return EXIT_OK


def cmd_induced(args) -> int:
    law = _law_from_args(args)
    direction = None
    if args.direction is not None:
        direction = tuple(float(c) for c in args.direction.split(","))
    rule = induced.SelectionRule(args.rule, direction)
    out = {"rule": args.rule, "nestling": induced.classify_nestling(law, rule).as_dict()}
    if args.walk:
        env = EnvironmentRealization(law, args.env_seed)
        path = induced.induced_walk_run(env, rule, (0,) * law.dimension, args.walk, args.walk_seed)
        if args.out:
            induced.write_path_csv(path, args.out)
        out["final_site"] = path[-1].tolist()
    print(json.dumps(out))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brwre", description="Branching random walks in random environment.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="conditions and recurrence/transience certificates")
    _add_model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export-preset", help="write a preset in the model file format")
    _add_model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("simulate", help="run one replica and write the trajectory (NDJSON)")
    _add_model_args(p)
    _add_seed_args(p)
    _add_sim_mode(p)
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--residual-threshold", type=int, default=4096)
    p.add_argument("--count-cap", type=int, help="per-site count cap (exact mode fails above it)")
    p.add_argument("--trap", choices=sorted(TRAPS))
    p.add_argument("--depth", type=int, default=8)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hitting", help="hitting-time survival curve (CSV)")
    _add_model_args(p)
    _add_seed_args(p, horizon=1000)
    p.add_argument("--target", type=_site, required=True)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--mode", choices=[estimators.QUENCHED, estimators.ANNEALED], default=estimators.ANNEALED)
    _add_sim_mode(p, "--sim-mode")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--ladder", type=lambda t: [int(x) for x in t.split(",")])
    p.add_argument("--trap", choices=sorted(TRAPS))
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_hitting)

    p = sub.add_parser("shape", help="directional radii of B_n, barB_n, tildeB_n (CSV)")
    _add_model_args(p)
    _add_seed_args(p)
    p.add_argument("--time", type=int, default=100)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--directions", type=int, default=16)
    p.add_argument("--variants", default="B")
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--mode", choices=[estimators.QUENCHED, estimators.ANNEALED], default=estimators.ANNEALED)
    _add_sim_mode(p, "--sim-mode")
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("couple", help="subadditivity audit of the coupled hitting times")
    _add_model_args(p)
    _add_seed_args(p, horizon=12)
    p.add_argument("--triples", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("seed-audit", help="return-probability audit of a planted three-site seed")
    p.add_argument("--rho", type=_rational, default=Fraction(9, 10))
    p.add_argument("--eps", type=_rational, default=Fraction(1, 2))
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--walk-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_seed_audit)

    p = sub.add_parser("supermartingale", help="exact audit of F_n under a Condition L certificate")
    _add_model_args(p)
    _add_seed_args(p)
    p.add_argument("--s", type=_site)
    p.add_argument("--lambda", dest="lam", type=_rational)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--mode", choices=[estimators.QUENCHED, estimators.ANNEALED], default=estimators.ANNEALED)
    _add_sim_mode(p, "--sim-mode")
    p.set_defaults(func=cmd_supermartingale)

    p = sub.add_parser("induced", help="nestling class of an induced walk, optionally a sample path")
    _add_model_args(p)
    p.add_argument("--rule", choices=[induced.UNIFORM, induced.PARTICLE_UNIFORM, induced.EXTREMAL],
                   default=induced.UNIFORM)
    p.add_argument("--direction")
    p.add_argument("--walk", type=int, default=0, help="sample a path of this length")
    p.add_argument("--env-seed", type=int, default=0)
    p.add_argument("--walk-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_induced)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelValidationError as exc:
        print(json.dumps({"error": "ModelValidationError", "issues": [list(i) for i in exc.issues]}), file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT
    except SaturationOverflow as exc:
        print(json.dumps({"error": "SaturationOverflow", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
