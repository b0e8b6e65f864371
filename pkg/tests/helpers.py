"""Random model generation and small independent oracles shared by tests."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from brwre.model import EnvironmentLaw, OffspringVector, SiteLaw, StepSet, unit_vectors


def random_steps(g: np.random.Generator, d: int) -> StepSet:
    steps = list(unit_vectors(d))
    extra = [s for s in itertools.product(range(-1, 2), repeat=d) if s not in steps]
    for s in extra:
        if g.random() < 0.3:
            steps.append(s)
    return StepSet(d, tuple(steps))


def random_vector(g: np.random.Generator, steps: StepSet) -> OffspringVector:
    n = len(steps)
    k = int(g.integers(1, 4))
    counts: dict[int, int] = {}
    for i in g.integers(0, n, k):
        counts[int(i)] = counts.get(int(i), 0) + 1
    return OffspringVector.from_mapping(counts)


def random_site_law(g: np.random.Generator, steps: StepSet, max_atoms: int = 5, elliptic: bool = True) -> SiteLaw:
    """A site law with at most ``max_atoms`` atoms.

    With ``elliptic`` the last atom sends one child along every unit step,
    which gives Conditions B and E.
    """
    n_rand = int(g.integers(1, max_atoms if elliptic else max_atoms + 1))
    vecs = [random_vector(g, steps) for _ in range(n_rand)]
    if elliptic:
        vecs.append(OffspringVector.of(steps, {e: 1 for e in unit_vectors(steps.dimension)}))
    w = [int(x) for x in g.integers(1, 10, len(vecs))]
    tot = sum(w)
    return SiteLaw.of((v, Fraction(x, tot)) for v, x in zip(vecs, w))


def random_law(g: np.random.Generator, max_dim: int = 2, max_laws: int = 4, max_atoms: int = 5,
               elliptic: bool = True) -> EnvironmentLaw:
    d = int(g.integers(1, max_dim + 1))
    steps = random_steps(g, d)
    n_laws = int(g.integers(1, max_laws + 1))
    laws = list(dict.fromkeys(random_site_law(g, steps, max_atoms, elliptic) for _ in range(n_laws)))
    w = [int(x) for x in g.integers(1, 10, len(laws))]
    tot = sum(w)
    return EnvironmentLaw(steps, tuple(laws), tuple(Fraction(x, tot) for x in w))


def brute_mean_offspring(omega: SiteLaw, steps: StepSet) -> dict:
    """mu_y by expanding every atom child by child."""
    mu = {y: Fraction(0) for y in steps.steps}
    for v, p in omega.atoms:
        for i, c in v.counts:
            for _ in range(c):
                mu[steps.steps[i]] += p
    return mu


def brute_L_value(omega: SiteLaw, steps: StepSet, s, lam: Fraction) -> Fraction:
    """sum_v omega(v) sum_children lam^(y.s), child by child."""
    tot = Fraction(0)
    for v, p in omega.atoms:
        for i, c in v.counts:
            y = steps.steps[i]
            tot += p * c * lam ** sum(a * b for a, b in zip(y, s))
    return tot
