"""Induced random walks: follow one child per generation.

A selection rule turns each site law into a one-step law ``p(y)`` on the
step set: pick an offspring vector from ``omega``, then one of its children
with kernel ``kappa_v``. Three kernels are provided: uniform over the
distinct occupied steps, proportional to the child counts, and concentrated
on the steps maximizing ``r . x``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import hull, rng
from .environment import EnvironmentRealization
from .model import EnvironmentLaw, OffspringVector, Site, SiteLaw, StepSet

UNIFORM, PARTICLE_UNIFORM, EXTREMAL = "uniform", "particleUniform", "rExtremal"
NESTLING, NON_NESTLING, MARGINAL = "nestling", "nonNestling", "marginallyNestling"

_INDUCED_TAG = 0x494E44


@dataclass(frozen=True)
class SelectionRule:
    kind: str = UNIFORM
    direction: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, PARTICLE_UNIFORM, EXTREMAL):
            raise ValueError(f"unknown selection rule {self.kind!r}")
        if self.kind == EXTREMAL:
            if self.direction is None:
                raise ValueError("the extremal rule needs a direction")
            r = tuple(self.direction)
            norm2 = sum(float(c) ** 2 for c in r)
            if abs(norm2 - 1) > 1e-12:
                raise ValueError(f"direction {r} is not a unit vector")
            object.__setattr__(self, "direction", r)


def _kernel(v: OffspringVector, steps: StepSet, rule: SelectionRule) -> dict[int, Fraction]:
    if rule.kind == UNIFORM:
        sup = v.support
        return {i: Fraction(1, len(sup)) for i in sup}
    if rule.kind == PARTICLE_UNIFORM:
        return {i: Fraction(c, v.total) for i, c in v.counts}
    r = rule.direction
    score = {i: sum(a * b for a, b in zip(r, steps.steps[i])) for i in v.support}
    best = max(score.values())
    # ties: lexicographically smallest step
    i = min((i for i, s in score.items() if s == best), key=lambda i: steps.steps[i])
    return {i: Fraction(1)}


def induced_step_law(omega: SiteLaw, steps: StepSet, rule: SelectionRule) -> dict[Site, Fraction]:
    """Exact one-step law of the induced walk at a site with law ``omega``."""
    out = {y: Fraction(0) for y in steps.steps}
    for v, p in omega.atoms:
        for i, k in _kernel(v, steps, rule).items():
            out[steps.steps[i]] += p * k
    return out


def induced_drift(omega: SiteLaw, steps: StepSet, rule: SelectionRule) -> tuple:
    law = induced_step_law(omega, steps, rule)
    d = steps.dimension
    return tuple(sum((p * y[j] for y, p in law.items()), Fraction(0)) for j in range(d))


@dataclass
class NestlingClass:
    kind: str
    witness: Optional[tuple] = None
    drifts: tuple = ()
    note: str = ""

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "drifts": [[str(c) for c in dft] for dft in self.drifts]}
        if self.witness is not None:
            out["witness"] = [str(c) for c in self.witness]
        if self.note:
            out["note"] = self.note
        return out


def classify_nestling(law: EnvironmentLaw, rule: SelectionRule) -> NestlingClass:
    """Nestling iff 0 is interior to the hull of the per-law induced drifts."""
    drifts = tuple(induced_drift(w, law.step_set, rule) for w in law.support)
    pos = hull.origin_position(list(drifts), law.dimension)
    if pos.kind == hull.INTERIOR:
        return NestlingClass(NESTLING, drifts=drifts)
    if pos.kind == hull.OUTSIDE:
        return NestlingClass(NON_NESTLING, witness=pos.witness, drifts=drifts)
    if pos.kind == hull.BOUNDARY:
        return NestlingClass(MARGINAL, drifts=drifts)
    return NestlingClass(MARGINAL, drifts=drifts, note=f"hull test inconclusive (margin {pos.margin:.3g})")


# ------------------------------------------------------------------ sampling


def induced_walks(env: EnvironmentRealization, rule: SelectionRule, start: Site, horizon: int,
                  seeds: Sequence[int]) -> np.ndarray:
    """Sample one induced walk per seed; returns an ``(R, horizon + 1, d)`` array.

    Each step is drawn directly from the exact induced law at the current site
    by a keyed uniform of ``(seed, n)``.
    """
    steps = env.law.step_set
    d = steps.dimension
    step_arr = np.array(steps.steps, dtype=np.int64)
    cuts = []
    for w in env.law_table:
        p = induced_step_law(w, steps, rule)
        cuts.append(rng.exact_thresholds([p[y] for y in steps.steps]))
    seeds = np.array([int(s) & rng.MASK64 for s in seeds], dtype=np.uint64)
    R = len(seeds)
    path = np.zeros((R, horizon + 1, d), dtype=np.int64)
    path[:, 0] = np.asarray(start, dtype=np.int64)
    for n in range(horizon):
        x = path[:, n]
        li = env.indices(x)
        u = rng.uniform_int53(seeds, _INDUCED_TAG, n)
        j = np.zeros(R, dtype=np.int64)
        for k in np.unique(li):
            sel = li == k
            j[sel] = np.searchsorted(cuts[k], u[sel], side="right")
        path[:, n + 1] = x + step_arr[j]
    return path


def induced_walk_run(env: EnvironmentRealization, rule: SelectionRule, start: Site, horizon: int,
                     seed: int) -> np.ndarray:
    return induced_walks(env, rule, start, horizon, [seed])[0]


def write_path_csv(path: np.ndarray, fh_or_path) -> None:
    d = path.shape[1]
    own = isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__")
    fh = open(fh_or_path, "w", newline="") if own else fh_or_path
    try:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"x{i + 1}" for i in range(d)])
        for n, row in enumerate(path):
            w.writerow([n] + [int(c) for c in row])
    finally:
        if own:
            fh.close()
