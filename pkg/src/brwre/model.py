"""Model objects: step set, offspring vectors, site laws and the law Q.

All probabilities are exact :class:`fractions.Fraction` values. Objects are
frozen dataclasses and are safe to share once validated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

Site = tuple[int, ...]


class ModelValidationError(ValueError):
    """Raised by :func:`validate_model` with every violated invariant.

    ``issues`` is a list of ``(code, message)`` pairs; codes include
    ``EmptySupport``, ``ProbabilitySumMismatch``, ``MissingUnitSteps`` and
    ``ZeroOffspringVector``.
    """

    def __init__(self, issues: list[tuple[str, str]]):
        self.issues = issues
        super().__init__("; ".join(f"{c}: {m}" for c, m in issues))

    @property
    def codes(self) -> list[str]:
        return [c for c, _ in self.issues]


class ConvolutionOverflow(RuntimeError):
    pass


def parse_fraction(value) -> Fraction:
    """Parse ``"p/q"``, an integer, or a Fraction; floats are rejected."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        s = value.strip()
        try:
            if "/" in s:
                num, den = s.split("/")
                return Fraction(int(num), int(den))
            return Fraction(int(s))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed rational {value!r}") from exc
    raise ValueError(f"not a rational: {value!r}")


def format_fraction(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def unit_vectors(d: int) -> list[Site]:
    out = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        out.append(tuple(e))
        e[i] = -1
        out.append(tuple(e))
    return out


@dataclass(frozen=True)
class StepSet:
    """The finite jump set; always contains the 2d unit vectors."""

    dimension: int
    steps: tuple[Site, ...]

    def __post_init__(self):
        issues = self._problems(self.dimension, self.steps)
        if issues:
            raise ModelValidationError(issues)

    @staticmethod
    def _problems(d, steps) -> list[tuple[str, str]]:
        issues = []
        if d < 1:
            issues.append(("BadDimension", f"dimension must be positive, got {d}"))
            return issues
        for s in steps:
            if len(s) != d:
                issues.append(("BadStep", f"step {s} has wrong dimension"))
        if len(set(steps)) != len(steps):
            issues.append(("DuplicateStep", "steps contain duplicates"))
        missing = [e for e in unit_vectors(d) if e not in set(steps)]
        if missing:
            issues.append(("MissingUnitSteps", f"missing unit steps {missing}"))
        return issues

    @cached_property
    def index(self) -> dict[Site, int]:
        return {s: i for i, s in enumerate(self.steps)}

    @property
    def L0(self) -> int:
        """Maximal jump length in the sup norm."""
        return max(max(abs(c) for c in s) for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class OffspringVector:
    """Children counts per step index, stored sparsely and sorted."""

    counts: tuple[tuple[int, int], ...]

    @classmethod
    def from_mapping(cls, m: Mapping[int, int]) -> "OffspringVector":
        return cls(tuple(sorted((int(k), int(v)) for k, v in m.items() if v != 0)))

    @classmethod
    def of(cls, steps: StepSet, children: Mapping[Site, int]) -> "OffspringVector":
        """Build from ``{step vector: count}``."""
        return cls.from_mapping({steps.index[tuple(s)]: c for s, c in children.items()})

    @property
    def total(self) -> int:
        return sum(c for _, c in self.counts)

    @property
    def support(self) -> tuple[int, ...]:
        """Step indices receiving at least one child."""
        return tuple(i for i, c in self.counts if c >= 1)

    def get(self, step_index: int) -> int:
        for i, c in self.counts:
            if i == step_index:
                return c
        return 0

    def as_dict(self) -> dict[int, int]:
        return dict(self.counts)


@dataclass(frozen=True)
class SiteLaw:
    """A finite distribution over offspring vectors (atoms with positive mass)."""

    atoms: tuple[tuple[OffspringVector, Fraction], ...]

    @classmethod
    def of(cls, pairs: Iterable[tuple[OffspringVector, Fraction]]) -> "SiteLaw":
        merged: dict[OffspringVector, Fraction] = {}
        for v, p in pairs:
            merged[v] = merged.get(v, Fraction(0)) + Fraction(p)
        return cls(tuple((v, p) for v, p in merged.items() if p != 0))

    def __post_init__(self):
        issues = []
        if not self.atoms:
            issues.append(("EmptyLaw", "site law has no atoms"))
        if any(p < 0 for _, p in self.atoms):
            issues.append(("NegativeProbability", "negative atom probability"))
        total = sum((p for _, p in self.atoms), Fraction(0))
        if self.atoms and total != 1:
            issues.append(("ProbabilitySumMismatch", f"atom probabilities sum to {total}"))
        vecs = [v for v, _ in self.atoms]
        if len(set(vecs)) != len(vecs):
            issues.append(("DuplicateAtom", "duplicate offspring vectors"))
        if any(v.total < 1 for v in vecs):
            issues.append(("ZeroOffspringVector", "offspring vector with no children"))
        if issues:
            raise ModelValidationError(issues)

    @property
    def probabilities(self) -> tuple[Fraction, ...]:
        return tuple(p for _, p in self.atoms)

    @property
    def vectors(self) -> tuple[OffspringVector, ...]:
        return tuple(v for v, _ in self.atoms)

    def branching_mass(self) -> Fraction:
        """omega(|v| >= 2)."""
        return sum((p for v, p in self.atoms if v.total >= 2), Fraction(0))

    def mass_towards(self, step_index: int) -> Fraction:
        """omega(v : v_e >= 1) for the step with the given index."""
        return sum((p for v, p in self.atoms if v.get(step_index) >= 1), Fraction(0))


@dataclass(frozen=True)
class EnvironmentLaw:
    """The measure Q: finitely many site laws with positive rational weights."""

    step_set: StepSet
    support: tuple[SiteLaw, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        issues = []
        if not self.support:
            issues.append(("EmptySupport", "Q has empty support"))
        if len(self.support) != len(self.weights):
            issues.append(("WeightCountMismatch", "one weight per support law required"))
        if any(w <= 0 for w in self.weights):
            issues.append(("NonPositiveWeight", "support laws must have positive weight"))
        if self.weights and sum(self.weights, Fraction(0)) != 1:
            issues.append(("ProbabilitySumMismatch", f"Q weights sum to {sum(self.weights, Fraction(0))}"))
        n = len(self.step_set)
        for law in self.support:
            for v in law.vectors:
                if any(not 0 <= i < n for i, _ in v.counts):
                    issues.append(("BadIndex", f"offspring vector {v.counts} indexes outside the step set"))
        if issues:
            raise ModelValidationError(issues)

    @property
    def dimension(self) -> int:
        return self.step_set.dimension

    def reweighted(self, weights: Sequence[Fraction]) -> "EnvironmentLaw":
        return EnvironmentLaw(self.step_set, self.support, tuple(Fraction(w) for w in weights))


@dataclass(frozen=True)
class ConditionsReport:
    B: bool
    E: bool
    UE: Optional[Fraction]
    A: bool

    def as_dict(self) -> dict:
        return {
            "B": self.B,
            "E": self.E,
            "UE": None if self.UE is None else format_fraction(self.UE),
            "A": self.A,
        }


# ---------------------------------------------------------------- conditions


def check_condition_B(law: EnvironmentLaw) -> bool:
    return any(w.branching_mass() > 0 for w in law.support)


def _unit_masses(omega: SiteLaw, steps: StepSet) -> list[Fraction]:
    return [omega.mass_towards(steps.index[e]) for e in unit_vectors(steps.dimension)]


def check_condition_UE(law: EnvironmentLaw) -> Optional[Fraction]:
    """Largest uniform ellipticity constant, or None when ellipticity fails."""
    eps = min(min(_unit_masses(w, law.step_set)) for w in law.support)
    return eps if eps > 0 else None


def check_condition_E(law: EnvironmentLaw) -> bool:
    # finite support: E and UE coincide
    return check_condition_UE(law) is not None


def check_condition_A(law: EnvironmentLaw) -> bool:
    even = {i for i, s in enumerate(law.step_set.steps) if sum(abs(c) for c in s) % 2 == 0}
    return any(any(i in even for i in v.support) for w in law.support for v in w.vectors)


def conditions(law: EnvironmentLaw) -> ConditionsReport:
    ue = check_condition_UE(law)
    return ConditionsReport(check_condition_B(law), ue is not None, ue, check_condition_A(law))


def mean_offspring(omega: SiteLaw, steps: StepSet) -> dict[Site, Fraction]:
    """Mean number of children sent along each step."""
    mu = {s: Fraction(0) for s in steps.steps}
    for v, p in omega.atoms:
        for i, c in v.counts:
            mu[steps.steps[i]] += p * c
    return mu


def _convolve(a: Mapping[Site, Fraction], b: Mapping[Site, Fraction], bound: int) -> dict[Site, Fraction]:
    out: dict[Site, Fraction] = {}
    for x, p in a.items():
        for y, q in b.items():
            z = tuple(i + j for i, j in zip(x, y))
            out[z] = out.get(z, Fraction(0)) + p * q
            if len(out) > bound:
                raise ConvolutionOverflow(f"support exceeds {bound} sites")
    return out


def mean_measure(omega: SiteLaw, steps: StepSet, k: int, bound: int = 10**6) -> dict[Site, Fraction]:
    """k-fold convolution of the mean offspring measure (homogeneous environment)."""
    base = {s: m for s, m in mean_offspring(omega, steps).items() if m != 0}
    cur: dict[Site, Fraction] = {(0,) * steps.dimension: Fraction(1)}
    for _ in range(k):
        cur = _convolve(cur, base, bound)
    return cur


def k_step_mean_return(omega: SiteLaw, steps: StepSet, k: int, bound: int = 10**6) -> Fraction:
    """Mean number of generation-k descendants back at the starting site."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return mean_measure(omega, steps, k, bound).get((0,) * steps.dimension, Fraction(0))


# ------------------------------------------------------------ serialization


def validate_model(raw: Mapping) -> EnvironmentLaw:
    """Validate a parsed model document and return the environment law.

    Every violated invariant is collected before raising
    :class:`ModelValidationError`.
    """
    issues: list[tuple[str, str]] = []

    def fail():
        raise ModelValidationError(issues)

    try:
        d = int(raw["dimension"])
        steps = tuple(tuple(int(c) for c in s) for s in raw["steps"])
        raw_vectors = raw["offspring_vectors"]
        raw_laws = raw["site_laws"]
        raw_q = raw["Q"]
    except (KeyError, TypeError, ValueError) as exc:
        issues.append(("MalformedDocument", f"missing or malformed field: {exc}"))
        fail()

    issues.extend(StepSet._problems(d, steps))
    n_steps = len(steps)

    vectors: list[Optional[OffspringVector]] = []
    for j, rv in enumerate(raw_vectors):
        try:
            counts = {int(k): int(c) for k, c in rv.items()}
        except (AttributeError, ValueError, TypeError):
            issues.append(("MalformedDocument", f"offspring vector {j} is not a map"))
            vectors.append(None)
            continue
        if any(c < 0 for c in counts.values()):
            issues.append(("NegativeCount", f"offspring vector {j} has a negative count"))
        if any(not 0 <= k < n_steps for k in counts):
            issues.append(("BadIndex", f"offspring vector {j} indexes outside the step set"))
        if sum(counts.values()) < 1:
            issues.append(("ZeroOffspringVector", f"offspring vector {j} has no children"))
        vectors.append(OffspringVector.from_mapping(counts))

    laws: list[Optional[list]] = []
    for j, rl in enumerate(raw_laws):
        atoms = []
        total = Fraction(0)
        seen = set()
        try:
            items = list(rl.items())
        except AttributeError:
            issues.append(("MalformedDocument", f"site law {j} is not a map"))
            laws.append(None)
            continue
        for k, p in items:
            try:
                idx = int(k)
                prob = parse_fraction(p)
            except ValueError as exc:
                issues.append(("MalformedRational", f"site law {j}: {exc}"))
                continue
            if not 0 <= idx < len(vectors):
                issues.append(("BadIndex", f"site law {j} references vector {idx}"))
                continue
            if prob < 0:
                issues.append(("NegativeProbability", f"site law {j} atom {idx} has negative mass"))
            v = vectors[idx]
            if v is not None and v in seen:
                issues.append(("DuplicateAtom", f"site law {j} lists the same offspring vector twice"))
            seen.add(v)
            total += prob
            atoms.append((v, prob))
        if not atoms:
            issues.append(("EmptyLaw", f"site law {j} has no atoms"))
        elif total != 1:
            issues.append(("ProbabilitySumMismatch", f"site law {j} sums to {total}"))
        laws.append(atoms)

    support, weights = [], []
    if not raw_q:
        issues.append(("EmptySupport", "Q lists no laws"))
    wsum = Fraction(0)
    used = set()
    for entry in raw_q:
        try:
            li = int(entry["law_index"])
            w = parse_fraction(entry["weight"])
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(("MalformedRational", f"Q entry {entry!r}: {exc}"))
            continue
        if not 0 <= li < len(laws):
            issues.append(("BadIndex", f"Q references law {li}"))
            continue
        if li in used:
            issues.append(("DuplicateSupport", f"law {li} listed twice in Q"))
        used.add(li)
        if w <= 0:
            issues.append(("NonPositiveWeight", f"law {li} has weight {w}"))
        wsum += w
        support.append(li)
        weights.append(w)
    if raw_q and wsum != 1:
        issues.append(("ProbabilitySumMismatch", f"Q weights sum to {wsum}"))

    if issues:
        fail()
    step_set = StepSet(d, steps)
    site_laws = tuple(SiteLaw.of(laws[li]) for li in support)
    return EnvironmentLaw(step_set, site_laws, tuple(weights))


def law_to_document(law: EnvironmentLaw) -> dict:
    """Inverse of :func:`validate_model` (canonical vector and law ordering)."""
    vec_index: dict[OffspringVector, int] = {}
    vectors = []
    site_laws = []
    for omega in law.support:
        entry = {}
        for v, p in omega.atoms:
            if v not in vec_index:
                vec_index[v] = len(vectors)
                vectors.append({str(i): c for i, c in v.counts})
            entry[str(vec_index[v])] = format_fraction(p)
        site_laws.append(entry)
    return {
        "dimension": law.dimension,
        "steps": [list(s) for s in law.step_set.steps],
        "offspring_vectors": vectors,
        "site_laws": site_laws,
        "Q": [{"law_index": i, "weight": format_fraction(w)} for i, w in enumerate(law.weights)],
    }


def load_model(path) -> EnvironmentLaw:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelValidationError([("MalformedDocument", str(exc))]) from exc
    return validate_model(raw)


def dump_model(law: EnvironmentLaw, path) -> None:
    with open(path, "w") as fh:
        json.dump(law_to_document(law), fh, indent=1)
