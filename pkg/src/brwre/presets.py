"""Parameterized example models and planted environment patches.

Each preset builds a validated :class:`EnvironmentLaw`. ``PRESETS`` maps the
CLI names to builders; parameters are exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

from .model import EnvironmentLaw, OffspringVector, SiteLaw, Site, StepSet

F = Fraction
E1, E2, W1, W2 = (1, 0), (0, 1), (-1, 0), (0, -1)


def _law(steps: StepSet, atoms) -> SiteLaw:
    """``atoms`` is a list of ``({step: count}, probability)``."""
    return SiteLaw.of((OffspringVector.of(steps, children), F(p)) for children, p in atoms)


# ----------------------------------------------------------- two-dimensional


def exx_steps() -> StepSet:
    return StepSet(2, (E1, E2, W1, W2))


def exx_laws(a=F(1, 2)) -> dict[str, SiteLaw]:
    """The three site laws omega0, omega+, omega- of the 2-d worked example."""
    s = exx_steps()
    v5 = {E1: 1, E2: 2, W1: 1, W2: 1}
    a = F(a)
    return {
        "omega0": _law(s, [({E1: 1}, F(3, 8)), ({E2: 1}, F(1, 4)), ({W1: 1}, F(1, 8)), ({W2: 1}, F(1, 4))]),
        "omega+": _law(s, [({E1: 1}, a), (v5, 1 - a)]),
        "omega-": _law(s, [({W1: 1}, F(1, 8)), (v5, F(7, 8))]),
    }


def exx_q1(alpha=F(1, 2)) -> EnvironmentLaw:
    """Q1(omega0) = alpha = 1 - Q1(omega-); recurrent for all alpha."""
    laws = exx_laws()
    alpha = F(alpha)
    return EnvironmentLaw(exx_steps(), (laws["omega0"], laws["omega-"]), (alpha, 1 - alpha))


def exx_q2(a=F(1, 2), alpha=F(1, 2)) -> EnvironmentLaw:
    """Q2(omega0) = alpha = 1 - Q2(omega+); recurrent for a <= 1/2, transient for a >= 8/9."""
    laws = exx_laws(a)
    alpha = F(alpha)
    return EnvironmentLaw(exx_steps(), (laws["omega0"], laws["omega+"]), (alpha, 1 - alpha))


def flatedge(alpha=F(1, 2)) -> EnvironmentLaw:
    """Two laws whose every offspring vector sends children to e1 and e2."""
    s = exx_steps()
    v1 = {E1: 1, E2: 1}
    v2 = {E1: 1, E2: 1, W1: 1}
    v3 = {E1: 1, E2: 1, W2: 1}
    w1 = _law(s, [(v1, F(2, 5)), (v2, F(2, 5)), (v3, F(1, 5))])
    w2 = _law(s, [(v1, F(2, 5)), (v2, F(1, 5)), (v3, F(2, 5))])
    alpha = F(alpha)
    return EnvironmentLaw(s, (w1, w2), (alpha, 1 - alpha))


# ----------------------------------------------------------- one-dimensional


def nn_steps() -> StepSet:
    return StepSet(1, ((-1,), (1,)))


def trap_laws(p) -> dict[str, SiteLaw]:
    """omega1 (drift right), omega2 (drift left), both without branching."""
    s = nn_steps()
    p = F(p)
    return {
        "omega1": _law(s, [({(-1,): 1}, p), ({(1,): 1}, 1 - p)]),
        "omega2": _law(s, [({(1,): 1}, p), ({(-1,): 1}, 1 - p)]),
    }


def qdecay(p=F(1, 100)) -> EnvironmentLaw:
    """Three laws of weight 1/3; the third branches into independent +-1 children."""
    s = nn_steps()
    p = F(p)
    t = trap_laws(p)
    # one child w.p. 2p, two children w.p. 1-2p, each child left/right w.p. 1/2
    w3 = _law(s, [
        ({(-1,): 1}, p), ({(1,): 1}, p),
        ({(-1,): 2}, (1 - 2 * p) / 4), ({(1,): 2}, (1 - 2 * p) / 4),
        ({(-1,): 1, (1,): 1}, (1 - 2 * p) / 2),
    ])
    third = F(1, 3)
    return EnvironmentLaw(s, (t["omega1"], t["omega2"], w3), (third, third, third))


def infexp(p=F(1, 100), alpha1=F(3, 10), alpha2=F(3, 10)) -> EnvironmentLaw:
    """Trap laws plus a law that always sends one child left and one right."""
    s = nn_steps()
    t = trap_laws(p)
    w3 = _law(s, [({(-1,): 1, (1,): 1}, 1)])
    alpha1, alpha2 = F(alpha1), F(alpha2)
    return EnvironmentLaw(s, (t["omega1"], t["omega2"], w3), (alpha1, alpha2, 1 - alpha1 - alpha2))


def ex3(n_min: int = 6, n_max: int = 20) -> EnvironmentLaw:
    """The family omega^(n), truncated to n_min..n_max, with equal weights.

    Under omega^(n) a particle has 2 children w.p. 1/(n-1), else 1; each child
    independently goes left w.p. 1/n, right w.p. 4/n, stays w.p. 1 - 5/n.
    """
    s = StepSet(1, ((-1,), (0,), (1,)))
    laws = []
    for n in range(n_min, n_max + 1):
        q = {(-1,): F(1, n), (0,): 1 - F(5, n), (1,): F(4, n)}
        two, one = F(1, n - 1), F(n - 2, n - 1)
        atoms = [({y: 1}, one * qy) for y, qy in q.items()]
        keys = list(q)
        for i, y in enumerate(keys):
            for z in keys[i:]:
                mult = 1 if y == z else 2
                children = {y: 2} if y == z else {y: 1, z: 1}
                atoms.append((children, two * mult * q[y] * q[z]))
        laws.append(_law(s, atoms))
    w = F(1, len(laws))
    return EnvironmentLaw(s, tuple(laws), (w,) * len(laws))


def d1_shape(alpha=F(1, 2)) -> EnvironmentLaw:
    """Deterministic laws with 3 or 5 children spread over -1..1 or -2..2."""
    s = StepSet(1, tuple((k,) for k in range(-2, 3)))
    w1 = _law(s, [({(-1,): 1, (0,): 1, (1,): 1}, 1)])
    w2 = _law(s, [({(k,): 1 for k in range(-2, 3)}, 1)])
    alpha = F(alpha)
    return EnvironmentLaw(s, (w1, w2), (alpha, 1 - alpha))


def sec21() -> EnvironmentLaw:
    """One child left w.p. 1/3, five children right w.p. 2/3, everywhere."""
    s = nn_steps()
    return EnvironmentLaw(s, (_law(s, [({(-1,): 1}, F(1, 3)), ({(1,): 5}, F(2, 3))]),), (F(1),))


# ------------------------------------------------------------------ patches


def qdecay_trap(p=F(1, 100), depth: int = 8) -> dict[Site, SiteLaw]:
    """Right-drift sites on [-depth, -1] and a left-drift site at 0.

    A walker started at 0 keeps returning to 0 and escapes to 1 only with
    probability p per visit.
    """
    t = trap_laws(p)
    patch = {(x,): t["omega1"] for x in range(-depth, 0)}
    patch[(0,)] = t["omega2"]
    return patch


def infexp_trap(p=F(1, 100), depth: int = 8) -> dict[Site, SiteLaw]:
    """omega1 on [-2k, -k], omega2 on (-k, 0]: a trap just left of the origin."""
    t = trap_laws(p)
    patch = {(x,): t["omega1"] for x in range(-2 * depth, -depth + 1)}
    patch.update({(x,): t["omega2"] for x in range(-depth + 1, 1)})
    return patch


# ------------------------------------------------------------------ registry


@dataclass(frozen=True)
class Preset:
    name: str
    build: Callable[..., EnvironmentLaw]
    params: Mapping[str, object]
    description: str


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset("exx-q1", exx_q1, {"alpha": F(1, 2)}, "2-d worked example, Q1 = alpha omega0 + (1-alpha) omega-"),
        Preset("exx-q2", exx_q2, {"a": F(1, 2), "alpha": F(1, 2)}, "2-d worked example, Q2 = alpha omega0 + (1-alpha) omega+(a)"),
        Preset("flatedge", flatedge, {"alpha": F(1, 2)}, "2-d model whose limit shape has a flat edge"),
        Preset("qdecay", qdecay, {"p": F(1, 100)}, "1-d recurrent model with stretched-exponential quenched tail"),
        Preset("infexp", infexp, {"p": F(1, 100), "alpha1": F(3, 10), "alpha2": F(3, 10)}, "1-d recurrent model with infinite annealed mean hitting time"),
        Preset("ex3", ex3, {"n_min": 6, "n_max": 20}, "1-d family omega^(n), truncated; transient with lambda = 1/2"),
        Preset("d1-shape", d1_shape, {"alpha": F(1, 2)}, "1-d deterministic branching; shape [-(2-alpha), 2-alpha]"),
        Preset("sec21", sec21, {}, "1-d homogeneous, 1 left w.p. 1/3 or 5 right w.p. 2/3"),
    ]
}


def build_preset(name: str, **params) -> EnvironmentLaw:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    unknown = set(params) - set(preset.params)
    if unknown:
        raise TypeError(f"preset {name} takes {sorted(preset.params)}, got {sorted(unknown)}")
    args = dict(preset.params)
    args.update({k: v for k, v in params.items() if v is not None})
    return preset.build(**args)


def synthetic_seed(rho=F(9, 10), eps=F(1, 2)):
    """A three-site seed {-1, 0, 1} around W = {0} with return probability rho.

    The sites +-1 send their single child back to 0 with probability rho and
    outwards (off the patch) otherwise; the centre branches into two children
    with probability eps. Returns ``(law, patch, W)``.
    """
    s = nn_steps()
    rho, eps = F(rho), F(eps)
    t = trap_laws(1 - rho)
    centre = _law(s, [({(-1,): 1, (1,): 1}, eps), ({(1,): 1}, 1 - eps)]) if eps < 1 else \
        _law(s, [({(-1,): 1, (1,): 1}, 1)])
    patch = {(-1,): t["omega1"], (0,): centre, (1,): t["omega2"]}
    laws = tuple(dict.fromkeys(patch.values()))
    law = EnvironmentLaw(s, laws, tuple(F(1, len(laws)) for _ in laws))
    return law, patch, [(0,)]
