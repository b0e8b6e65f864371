"""Recurrence and transience certificates.

Recurrence: for each support law, the drift points
``sum_v omega(v) x_v`` (``x_v`` ranging over the steps that receive a child
from ``v``) are pooled; their hull's support function at ``r`` is
``phi_Q(r) = max_omega sum_v omega(v) D(r, v)``. The origin strictly inside
the hull means ``phi_Q > 0`` everywhere (recurrent); on the boundary means
``phi_Q >= 0`` (recurrent under uniform ellipticity); outside gives a
direction with ``phi_Q(r) < 0``.

Transience (Condition L): a direction ``s`` and ``lambda > 0`` with
``sum_y mu_y lambda^(y.s) <= 1`` for every support law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import hull
from .model import (
    EnvironmentLaw,
    OffspringVector,
    SiteLaw,
    StepSet,
    check_condition_UE,
    conditions,
    format_fraction,
    mean_offspring,
    unit_vectors,
)

STRICT_INTERIOR = "StrictInterior"
BOUNDARY_WITH_UE = "BoundaryWithUE"
BOUNDARY = "Boundary"
NEGATIVE = "Negative"
INCONCLUSIVE = "Inconclusive"

RECURRENT = "RecurrentCertified"
TRANSIENT = "TransientCertified"
UNKNOWN = "Unknown"

POINT_CAP = 10**6
L_TOL = 1e-9
T_BOX = 20.0
GOLDEN_TOL = 1e-10
N_GRID = 512
REFINE_MARGIN = 0.1


class PointCloudTooLarge(RuntimeError):
    pass


class InconsistentCertificates(RuntimeError):
    """Both a recurrence and a transience certificate were found."""


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return format_fraction(x)
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _fmt_vec(v) -> list:
    return [_fmt(c) for c in v]


# -------------------------------------------------------------- D and phi


def eval_D(r: Sequence, v: OffspringVector, steps: StepSet):
    """Largest projection on r of a step receiving at least one child."""
    return max(sum(ri * xi for ri, xi in zip(r, steps.steps[i])) for i in v.support)


def law_phi(omega: SiteLaw, r: Sequence, steps: StepSet):
    return sum(p * eval_D(r, v, steps) for v, p in omega.atoms)


def phi_Q(law: EnvironmentLaw, r: Sequence):
    """Support function of the pooled drift polytope (exact for rational r)."""
    return max(law_phi(w, r, law.step_set) for w in law.support)


def drift_points(omega: SiteLaw, steps: StepSet, cap: int = POINT_CAP) -> list[tuple]:
    """Hull-spanning subset of ``{sum_v omega(v) x_v : x_v in S_v}``.

    The set is a Minkowski sum; it is built atom by atom and pruned to hull
    vertices after every addition, exactly for d <= 2.
    """
    d = steps.dimension
    pts: list[tuple] = [tuple(Fraction(0) for _ in range(d))]
    for v, p in omega.atoms:
        opts = [steps.steps[i] for i in v.support]
        if len(pts) * len(opts) > cap:
            raise PointCloudTooLarge(f"more than {cap} selection points")
        pts = [tuple(a + p * x for a, x in zip(q, opt)) for q in pts for opt in opts]
        pts = hull.hull_vertices(pts, d)
    return pts


@dataclass
class RecurrenceVerdict:
    kind: str
    witness: Optional[tuple] = None
    witness_value: Optional[object] = None
    certificate: tuple = ()
    notes: list = field(default_factory=list)

    @property
    def recurrent(self) -> bool:
        return self.kind in (STRICT_INTERIOR, BOUNDARY_WITH_UE)

    def as_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.witness is not None:
            out["witness_direction"] = _fmt_vec(self.witness)
            out["phi_at_witness"] = _fmt(self.witness_value)
        if self.certificate:
            out["hull_vertices"] = [_fmt_vec(p) for p in self.certificate]
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _sampled_directions(d: int, k: int, seed: int = 0) -> np.ndarray:
    if d == 2:
        a = np.arange(k) * 2 * np.pi / k
        return np.c_[np.cos(a), np.sin(a)]
    if d == 3:
        i = np.arange(k) + 0.5
        z = 1 - 2 * i / k
        th = np.pi * (1 + 5**0.5) * i
        r = np.sqrt(1 - z * z)
        return np.c_[r * np.cos(th), r * np.sin(th), z]
    g = np.random.default_rng(seed).standard_normal((k, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def recurrence_check(law: EnvironmentLaw, cap: int = POINT_CAP) -> RecurrenceVerdict:
    d = law.dimension
    steps = law.step_set
    notes = []
    # signed axes first: they give readable exact witnesses
    for e in unit_vectors(d):
        val = phi_Q(law, e)
        if val < 0:
            return RecurrenceVerdict(NEGATIVE, witness=e, witness_value=val)
    try:
        cloud = []
        for w in law.support:
            cloud.extend(drift_points(w, steps, cap))
    except PointCloudTooLarge as exc:
        notes.append(str(exc))
        dirs = _sampled_directions(d, 4096)
        for r in dirs:
            val = float(phi_Q(law, [float(c) for c in r]))
            if val < -L_TOL:
                return RecurrenceVerdict(NEGATIVE, witness=tuple(r), witness_value=val, notes=notes)
        return RecurrenceVerdict(INCONCLUSIVE, notes=notes + ["no negative direction among sampled"])
    pos = hull.origin_position(cloud, d, tol=L_TOL)
    if pos.kind == hull.OUTSIDE:
        r = pos.witness
        return RecurrenceVerdict(NEGATIVE, witness=r, witness_value=phi_Q(law, r), notes=notes)
    if pos.kind == hull.INTERIOR:
        return RecurrenceVerdict(STRICT_INTERIOR, certificate=pos.vertices, notes=notes)
    if pos.kind == hull.BOUNDARY:
        if check_condition_UE(law) is not None:
            return RecurrenceVerdict(BOUNDARY_WITH_UE, certificate=pos.vertices, notes=notes)
        notes.append("origin on the hull boundary but Condition UE fails; not certified")
        return RecurrenceVerdict(BOUNDARY, certificate=pos.vertices, notes=notes)
    notes.append(f"LP margin {pos.margin:.3g} below tolerance")
    return RecurrenceVerdict(INCONCLUSIVE, notes=notes)


def check_triv2(law: EnvironmentLaw) -> Optional[int]:
    """Index of a support law with mean self-offspring > 1, if any."""
    zero = (0,) * law.dimension
    if zero not in law.step_set.index:
        return None
    for i, w in enumerate(law.support):
        if mean_offspring(w, law.step_set)[zero] > 1:
            return i
    return None


# -------------------------------------------------------------- Condition L


@dataclass
class LCheck:
    values: list
    ok: bool
    exact: bool


def _is_integer_vector(s) -> bool:
    return all(isinstance(c, (int, np.integer)) or (isinstance(c, Fraction) and c.denominator == 1) for c in s)


def verify_condition_L(law: EnvironmentLaw, s: Sequence, lam) -> LCheck:
    """Per-law values of ``sum_y mu_y lam^(y.s)`` and whether all are <= 1.

    Exact (rational) when ``s`` has integer entries and ``lam`` is rational;
    otherwise floating point with tolerance 1e-9.
    """
    if isinstance(lam, (int, Fraction)) and not isinstance(lam, bool):
        lam_q = Fraction(lam)
        if lam_q <= 0:
            raise ValueError("lambda must be positive")
        if _is_integer_vector(s):
            s_int = [int(c) for c in s]
            vals = []
            for w in law.support:
                mu = mean_offspring(w, law.step_set)
                vals.append(sum((m * lam_q ** sum(a * b for a, b in zip(y, s_int)) for y, m in mu.items()), Fraction(0)))
            return LCheck(vals, all(v <= 1 for v in vals), True)
    lam_f = float(lam)
    if lam_f <= 0:
        raise ValueError("lambda must be positive")
    s_f = np.array([float(c) for c in s])
    vals = []
    for w in law.support:
        mu = mean_offspring(w, law.step_set)
        vals.append(float(sum(float(m) * lam_f ** float(np.dot(y, s_f)) for y, m in mu.items())))
    return LCheck(vals, all(v <= 1 + L_TOL for v in vals), False)


@dataclass
class ConditionLCertificate:
    s: tuple  # unit direction (floats)
    lam: float  # lambda for the unit direction
    values: list
    exact: bool
    marginal: bool
    # exact form: integer direction and rational lambda, lam_exact^(y.direction)
    direction: Optional[tuple] = None
    lam_exact: Optional[Fraction] = None

    def as_dict(self) -> dict:
        out = {
            "s": [float(c) for c in self.s],
            "lambda": float(self.lam),
            "per_law_values": [_fmt(v) for v in self.values],
            "exact": self.exact,
            "marginal": self.marginal,
        }
        if self.direction is not None:
            out["direction"] = [int(c) for c in self.direction]
            out["lambda_exact"] = _fmt(self.lam_exact)
        return out


class _LObjective:
    """Vectorized ``g(s, t) = max_omega sum_y mu_y exp(t y.s)``."""

    def __init__(self, law: EnvironmentLaw):
        self.Y = np.array(law.step_set.steps, dtype=float)
        self.mu = np.array([[float(m) for m in mean_offspring(w, law.step_set).values()] for w in law.support])

    def g(self, S: np.ndarray, t: np.ndarray) -> np.ndarray:
        proj = self.Y @ S.T  # (n_steps, K)
        e = np.exp(proj * t[None, :])
        return (self.mu @ e).max(axis=0)

    def h(self, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Golden-section minimum over t in [-T, T] per direction."""
        K = len(S)
        lo = np.full(K, -T_BOX)
        hi = np.full(K, T_BOX)
        inv = (math.sqrt(5) - 1) / 2
        c = hi - inv * (hi - lo)
        d = lo + inv * (hi - lo)
        fc, fd = self.g(S, c), self.g(S, d)
        while (hi - lo).max() > GOLDEN_TOL:
            left = fc < fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            new_c = hi - inv * (hi - lo)
            new_d = lo + inv * (hi - lo)
            # reuse the surviving interior point
            c2 = np.where(left, new_c, d)
            d2 = np.where(left, c, new_d)
            fc2 = np.where(left, np.nan, fd)
            fd2 = np.where(left, fc, np.nan)
            need_c = np.isnan(fc2)
            need_d = np.isnan(fd2)
            if need_c.any():
                fc2[need_c] = self.g(S[need_c], c2[need_c])
            if need_d.any():
                fd2[need_d] = self.g(S[need_d], d2[need_d])
            c, d, fc, fd = c2, d2, fc2, fd2
        t = (lo + hi) / 2
        return self.g(S, t), t


def _integer_direction(s: np.ndarray, max_den: int = 12) -> Optional[tuple]:
    """Small integer vector parallel to s (within 1e-9 in angle), if any."""
    j = int(np.argmax(np.abs(s)))
    ratios = [Fraction(float(c / s[j])).limit_denominator(max_den) for c in s]
    den = math.lcm(*[r.denominator for r in ratios])
    v = np.array([int(r * den) for r in ratios], dtype=float) * np.sign(s[j])
    g = math.gcd(*[int(abs(c)) for c in v])
    v = v / g
    if np.linalg.norm(v / np.linalg.norm(v) - s) > 1e-9:
        return None
    return tuple(int(c) for c in v)


def condition_L_search(law: EnvironmentLaw) -> Optional[ConditionLCertificate]:
    """Search for (s, lambda) satisfying Condition L; verified before return."""
    d = law.dimension
    obj = _LObjective(law)
    axes = np.array(unit_vectors(d), dtype=float)
    S = axes if d == 1 else np.r_[axes, _sampled_directions(d, N_GRID)]
    vals, ts = obj.h(S)
    # an axis certificate is preferred: it can usually be made exact
    for k in range(len(axes)):
        if vals[k] <= 1 + L_TOL:
            s_k, t_k = (S[k], ts[k]) if ts[k] <= 0 else (-S[k], -ts[k])
            cert = _certify(law, s_k, t_k)
            if cert is not None:
                return cert
    best = int(np.argmin(vals))
    s_best, t_best, v_best = S[best], ts[best], vals[best]
    # local refinement only pays off when the grid is already close to 1
    if d >= 2 and v_best <= 1 + REFINE_MARGIN:
        for k in np.argsort(vals)[:2]:
            def f(x):
                n = np.linalg.norm(x)
                if n == 0:
                    return np.inf
                return float(obj.h((x / n)[None, :])[0][0])
            res = minimize(f, S[k], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
            if res.fun < v_best:
                s_new = res.x / np.linalg.norm(res.x)
                v, t = obj.h(s_new[None, :])
                s_best, t_best, v_best = s_new, t[0], v[0]
    if v_best > 1 + L_TOL:
        return None
    # orient so that lambda < 1
    if t_best > 0:
        s_best, t_best = -s_best, -t_best
    return _certify(law, s_best, t_best)


def _certify(law: EnvironmentLaw, s: np.ndarray, t: float) -> Optional[ConditionLCertificate]:
    lam = math.exp(t)
    direction = _integer_direction(s)
    if direction is not None:
        norm = math.sqrt(sum(c * c for c in direction))
        lam_int = lam ** norm  # lambda for the integer direction
        for den in (10, 100, 1000, 10**4, 10**6):
            q = Fraction(lam_int).limit_denominator(den)
            if q <= 0:
                continue
            chk = verify_condition_L(law, direction, q)
            if chk.ok:
                unit = tuple(c / norm for c in direction)
                marginal = max(chk.values) >= 1 - Fraction(1, 10**9)
                return ConditionLCertificate(unit, float(q) ** (1 / norm), chk.values, True, marginal,
                                             direction, q)
    chk = verify_condition_L(law, s, lam)
    if not chk.ok:
        return None
    return ConditionLCertificate(tuple(float(c) for c in s), lam, chk.values, False,
                                 max(chk.values) >= 1 - L_TOL)


# -------------------------------------------------------------- verdicts


@dataclass
class Classification:
    verdict: str
    conditions: dict
    recurrence: RecurrenceVerdict
    condition_L: Optional[ConditionLCertificate]
    triv2_law: Optional[int]
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "conditions": self.conditions,
            "recurrence_check": self.recurrence.as_dict(),
            "condition_L": None if self.condition_L is None else self.condition_L.as_dict(),
            "triv2_witness_law": self.triv2_law,
            "triv1": "not applicable: finite offspring support",
            "notes": list(self.notes),
        }


def classify(law: EnvironmentLaw) -> Classification:
    cond = conditions(law)
    rec = recurrence_check(law)
    tv = check_triv2(law)
    cert = condition_L_search(law)
    notes = []
    standing = cond.B and cond.E
    if not standing:
        notes.append("Conditions B and E are standing assumptions; no certificate is issued without them")
    rec_ok = standing and (rec.recurrent or tv is not None)
    tr_ok = standing and cert is not None
    if rec_ok and tr_ok:
        raise InconsistentCertificates(f"recurrence {rec.kind} and Condition L {cert.as_dict()} both certified")
    verdict = RECURRENT if rec_ok else TRANSIENT if tr_ok else UNKNOWN
    return Classification(verdict, cond.as_dict(), rec, cert, tv, notes)
