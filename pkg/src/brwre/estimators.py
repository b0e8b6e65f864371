"""Monte Carlo estimators built on the batched simulator.

* hitting-time survival curves with exact binomial intervals, plus
  qualitative tail-order regressions;
* censored mean hitting times over a ladder of horizons;
* directional radii of the visited / occupied / persistently occupied sets;
* an exact audit of the supermartingale ``F_n = sum_y eta_n(y) lam^(y.s)``;
* a seed audit that estimates the return probability of a planted patch.

Quenched runs share one environment seed and vary the walk seed; annealed
runs draw both per replica via :func:`brwre.rng.derive_seed`.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import beta

from . import rng
from .criteria import verify_condition_L
from .environment import EnvironmentPatch, EnvironmentRealization
from .model import EnvironmentLaw, Site, check_condition_A, check_condition_UE, mean_offspring
from .simulator import BatchSimulator, SimConfig, first_hits

QUENCHED, ANNEALED = "quenched", "annealed"
CHUNK = 256
MIN_COUNT = 5


class ConditionAMissing(ValueError):
    pass


class ConditionUEMissing(ValueError):
    pass


class CertificateInvalid(ValueError):
    pass


class PatchTooSmall(ValueError):
    pass


def replica_seeds(seed: int, n: int, stream: int = 0) -> list[int]:
    return [rng.derive_seed(seed, stream, r) for r in range(n)]


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    a = 1 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def geometric_grid(n_max: int, points: int = 20) -> list[int]:
    g = np.unique(np.round(np.geomspace(1, n_max, points)).astype(int))
    return [int(x) for x in g]


# ------------------------------------------------------------ hitting times


def _hits_chunk(args) -> tuple[np.ndarray, bool]:
    law, patch, env_seed, cfg, start, targets, walk_seeds, env_seeds = args
    env = EnvironmentRealization(law, env_seed, patch)
    return first_hits(env, cfg, start, targets, walk_seeds, env_seeds)


def hitting_times(law: EnvironmentLaw, target: Site, replicas: int, horizon: int, mode: str = QUENCHED,
                  env_seed: int = 0, walk_seed: int = 0, start: Optional[Site] = None,
                  patch: Optional[EnvironmentPatch] = None, sim_mode: str = "residual",
                  jobs: int = 1) -> tuple[np.ndarray, bool]:
    """``T(start, target)`` per replica (``-1`` when censored) and a saturation flag."""
    if mode not in (QUENCHED, ANNEALED):
        raise ValueError(f"mode must be {QUENCHED!r} or {ANNEALED!r}")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    d = law.dimension
    start = (0,) * d if start is None else tuple(start)
    cfg = SimConfig(mode=sim_mode, horizon=horizon)
    ws = replica_seeds(walk_seed, replicas, 1)
    es = replica_seeds(env_seed, replicas, 2) if mode == ANNEALED else None
    tasks = []
    for a in range(0, replicas, CHUNK):
        b = min(a + CHUNK, replicas)
        tasks.append((law, patch, env_seed, cfg, start, [tuple(target)], ws[a:b], None if es is None else es[a:b]))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_hits_chunk, tasks))
    else:
        parts = [_hits_chunk(t) for t in tasks]
    hits = np.concatenate([p[0] for p in parts])
    return hits, any(p[1] for p in parts)


@dataclass
class TailCurve:
    target: tuple
    grid: list
    survival: list
    lo: list
    hi: list
    replicas: int
    mode: str
    env_seed: Optional[int]
    censored: float
    saturated: bool = False

    def rows(self) -> list[tuple]:
        return [(n, s, a, b, self.censored) for n, s, a, b in zip(self.grid, self.survival, self.lo, self.hi)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "p_hat", "lo", "hi", "censored"])
            w.writerows(self.rows())


def tail_from_hits(hits: np.ndarray, grid: Sequence[int], target, mode, env_seed, saturated=False) -> TailCurve:
    R = len(hits)
    T = np.where(hits < 0, np.iinfo(np.int64).max, hits)
    surv, lo, hi = [], [], []
    for n in grid:
        k = int((T > n).sum())
        surv.append(k / R)
        a, b = clopper_pearson(k, R)
        lo.append(a)
        hi.append(b)
    return TailCurve(tuple(target), list(grid), surv, lo, hi, R, mode,
                     env_seed if mode == QUENCHED else None, float((hits < 0).mean()), saturated)


def estimate_tail(law: EnvironmentLaw, target: Site, grid: Sequence[int], replicas: int, mode: str = QUENCHED,
                  env_seed: int = 0, walk_seed: int = 0, patch: Optional[EnvironmentPatch] = None,
                  start: Optional[Site] = None, sim_mode: str = "residual", jobs: int = 1) -> TailCurve:
    grid = sorted(int(n) for n in grid)
    hits, sat = hitting_times(law, target, replicas, grid[-1], mode, env_seed, walk_seed, start, patch,
                              sim_mode, jobs)
    return tail_from_hits(hits, grid, target, mode, env_seed, sat)


@dataclass
class TailDiagnostic:
    """Regressions of the log-survival on the usable part of a curve.

    ``rate`` is the least-squares slope of ``-log S(n)`` against ``n`` (the
    exponential decay exponent), ``kappa`` the slope of ``log(-log S(n))``
    against ``log n``; the ``r2_*`` fields are the fits of ``-log S(n)``
    against ``n^kappa`` and against ``ln^d n``. Only grid points with at
    least ``MIN_COUNT`` survivors and ``MIN_COUNT`` hits are used.
    """

    rate: float
    kappa: float
    r2_power: float
    r2_logd: float
    points: int
    heavy_tail: bool = False

    def as_dict(self) -> dict:
        return {"rate": self.rate, "kappa": self.kappa, "r2_power": self.r2_power, "r2_logd": self.r2_logd,
                "points": self.points, "heavy_tail": self.heavy_tail}


def _r2(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 3 or np.ptp(x) == 0:
        return float("nan")
    c = np.polyfit(x, y, 1)
    res = y - np.polyval(c, x)
    tot = ((y - y.mean()) ** 2).sum()
    return float(1 - (res ** 2).sum() / tot) if tot > 0 else float("nan")


def tail_diagnostic(curve: TailCurve, d: int) -> TailDiagnostic:
    n = np.array(curve.grid, dtype=float)
    s = np.array(curve.survival)
    k = s * curve.replicas
    ok = (k >= MIN_COUNT) & (curve.replicas - k >= MIN_COUNT) & (n > 0)
    n, s = n[ok], s[ok]
    if len(n) < 2:
        nan = float("nan")
        return TailDiagnostic(nan, nan, nan, nan, int(len(n)))
    y = -np.log(s)
    rate = float(np.polyfit(n, y, 1)[0])
    kappa = float(np.polyfit(np.log(n), np.log(y), 1)[0])
    return TailDiagnostic(rate, kappa, _r2(n ** kappa, y), _r2(np.log(n) ** d, y), int(len(n)))


def compare_tails(curve: TailCurve, d: int, reference: TailCurve, d_ref: int) -> dict:
    """Tail-order comparison; ``curve`` is flagged heavy when its decay rate is smaller."""
    a, b = tail_diagnostic(curve, d), tail_diagnostic(reference, d_ref)
    heavier = bool(np.isfinite(a.rate) and np.isfinite(b.rate) and a.rate < b.rate)
    ref = dict(zip(reference.grid, reference.survival))
    at = {n: (sc, ref[n]) for n, sc in zip(curve.grid, curve.survival) if n in ref}
    a.heavy_tail = heavier or (curve.censored > 0 and reference.censored == 0)
    return {"curve": a.as_dict(), "reference": b.as_dict(), "heavy_tail": a.heavy_tail,
            "survival_at_matched_n": {str(n): list(v) for n, v in at.items()}}


@dataclass
class MeanLadder:
    ladder: list
    means: list
    stderr: list
    growth_exponent: float
    plateau: bool
    censored: list

    def as_dict(self) -> dict:
        return {"ladder": self.ladder, "censored_mean": self.means, "stderr": self.stderr,
                "growth_exponent": self.growth_exponent, "plateau": self.plateau, "censored_fraction": self.censored}


def mean_ladder_from_hits(hits: np.ndarray, ladder: Sequence[int]) -> MeanLadder:
    """``E[min(T, N)]`` for each rung ``N``.

    The plateau flag says the top two rungs agree within two standard
    errors; the growth exponent is the log-log slope over the top three.
    """
    ladder = [int(n) for n in ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("horizons must be increasing")
    T = np.where(hits < 0, np.iinfo(np.int64).max, hits)
    means, se, cens = [], [], []
    for N in ladder:
        x = np.minimum(T, N).astype(float)
        means.append(float(x.mean()))
        se.append(float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0)
        cens.append(float((T > N).mean()))
    k = min(3, len(ladder))
    if k >= 2 and all(m > 0 for m in means[-k:]):
        g = float(np.polyfit(np.log(ladder[-k:]), np.log(means[-k:]), 1)[0])
    else:
        g = 0.0
    plateau = len(ladder) >= 2 and abs(means[-1] - means[-2]) <= 2 * math.hypot(se[-1], se[-2]) + 1e-12
    return MeanLadder(ladder, means, se, g, bool(plateau), cens)


def estimate_mean_hitting(law: EnvironmentLaw, target: Site, ladder: Sequence[int], replicas: int,
                          mode: str = ANNEALED, env_seed: int = 0, walk_seed: int = 0,
                          patch: Optional[EnvironmentPatch] = None, sim_mode: str = "residual",
                          jobs: int = 1) -> MeanLadder:
    hits, _ = hitting_times(law, target, replicas, max(ladder), mode, env_seed, walk_seed, None, patch,
                            sim_mode, jobs)
    return mean_ladder_from_hits(hits, ladder)


# ------------------------------------------------------------------ shape


VARIANTS = ("B", "barB", "tildeB")


def probe_directions(d: int, k: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        a = np.arange(k) * 2 * np.pi / k
        u = np.c_[np.cos(a), np.sin(a)]
        u[np.abs(u) < 1e-15] = 0.0
        return u
    pts = [np.eye(d)[i] * s for i in range(d) for s in (1, -1)]
    g = np.random.default_rng(0).standard_normal((max(k - len(pts), 0), d))
    pts.extend(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.array(pts)


@dataclass
class ShapeEstimate:
    time: int
    replicas: int
    directions: np.ndarray
    # variant -> (replicas, directions) radii
    radii: dict
    convexity_defect: dict
    window: int
    mode: str

    def summary(self) -> dict:
        out = {}
        for v, r in self.radii.items():
            out[v] = {"mean": r.mean(axis=0).tolist(), "sd": r.std(axis=0, ddof=1).tolist() if len(r) > 1 else [0.0] * r.shape[1]}
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "mean", "sd", "variant"])
            for v, r in self.radii.items():
                sd = r.std(axis=0, ddof=1) if len(r) > 1 else np.zeros(r.shape[1])
                for u, m, s in zip(self.directions, r.mean(axis=0), sd):
                    w.writerow([" ".join(f"{c:.6g}" for c in u), m, s, v])


def _midpoint_defect(pts: np.ndarray, n: int, probes: int, seed: int) -> float:
    """Largest distance / n from a rounded midpoint of two points to the set."""
    if len(pts) < 2 or n == 0:
        return 0.0
    g = np.random.default_rng(seed)
    i = g.integers(0, len(pts), probes)
    j = g.integers(0, len(pts), probes)
    mid = np.floor((pts[i] + pts[j]) / 2)
    dist, _ = cKDTree(pts).query(mid)
    return float(dist.max() / n)


def occupancy_at(law: EnvironmentLaw, n: int, walk_seeds: Sequence[int], env_seed: int = 0,
                 env_seeds: Optional[Sequence[int]] = None, window: int = 0, sim_mode: str = "residual",
                 start: Optional[Site] = None, patch: Optional[EnvironmentPatch] = None) -> list[dict]:
    """Per replica, the coordinate arrays of B_n, barB_n and tildeB_n."""
    d = law.dimension
    start = (0,) * d if start is None else tuple(start)
    env = EnvironmentRealization(law, env_seed, patch)
    cfg = SimConfig(mode=sim_mode, horizon=n + window, window=window)
    sim = BatchSimulator(env, cfg, [start], walk_seeds, env_seeds)
    for _ in range(n):
        sim.step()
    R = len(walk_seeds)
    vis = sim.visited.copy()
    occ = sim.keys.copy()
    tilde = occ.copy()
    for _ in range(window):
        sim.step()
        tilde = np.intersect1d(tilde, sim.keys, assume_unique=True)
    out = []
    for r in range(R):
        out.append({
            "B": sim.coords_of(sim.replica_slice(vis, r)),
            "barB": sim.coords_of(sim.replica_slice(occ, r)),
            "tildeB": sim.coords_of(sim.replica_slice(tilde, r)),
        })
    return out


def estimate_shape(law: EnvironmentLaw, n: int, replicas: int, directions: int = 16,
                   variants: Sequence[str] = ("B",), mode: str = QUENCHED, env_seed: int = 0,
                   walk_seed: int = 0, window: int = 32, sim_mode: str = "residual",
                   probes: int = 2000) -> ShapeEstimate:
    """Normalized support-function radii ``max_{y in set} y.u / n``."""
    if check_condition_UE(law) is None:
        raise ConditionUEMissing("shape estimation assumes Condition UE")
    variants = tuple(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    if any(v != "B" for v in variants) and not check_condition_A(law):
        raise ConditionAMissing("barB and tildeB need Condition A (otherwise parity empties them)")
    d = law.dimension
    U = probe_directions(d, directions)
    ws = replica_seeds(walk_seed, replicas, 1)
    es = replica_seeds(env_seed, replicas, 2) if mode == ANNEALED else None
    sets = occupancy_at(law, n, ws, env_seed, es, window if "tildeB" in variants else 0, sim_mode)
    radii, defect = {}, {}
    scale = max(n, 1)
    for v in variants:
        r = np.zeros((replicas, len(U)))
        worst = 0.0
        for i, s in enumerate(sets):
            pts = s[v].astype(float)
            if len(pts):
                r[i] = (pts @ U.T).max(axis=0) / scale
                worst = max(worst, _midpoint_defect(pts, n, probes, i))
            else:
                r[i] = np.nan
        radii[v] = r
        defect[v] = worst
    return ShapeEstimate(n, replicas, U, radii, defect, window, sim_mode)


# --------------------------------------------------------- supermartingale


@dataclass
class SupermartingaleReport:
    exact: bool
    steps_checked: int
    violations: list
    mean_F: list
    mean_F_se: list
    mean_nonincreasing: bool
    saturated: bool

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"exact": self.exact, "steps_checked": self.steps_checked, "violations": self.violations,
                "mean_F": self.mean_F, "mean_F_se": self.mean_F_se,
                "mean_nonincreasing_within_ci": self.mean_nonincreasing, "saturated": self.saturated}


def _level_sums(sim: BatchSimulator, law_idx: np.ndarray, s: Sequence[int]):
    """Per replica, the particle count at each (level y.s, law) pair."""
    rep, coords = sim.rows()
    level = coords @ np.asarray(s, dtype=np.int64)
    key = np.c_[rep, level, law_idx]
    order = np.lexsort((key[:, 2], key[:, 1], key[:, 0]))
    key, cnt = key[order], sim.counts[order]
    starts = np.flatnonzero(np.r_[True, (key[1:] != key[:-1]).any(axis=1)])
    sums = np.add.reduceat(cnt, starts)
    return key[starts], sums


def supermartingale_audit(law: EnvironmentLaw, s: Sequence, lam, horizon: int, replicas: int,
                          mode: str = ANNEALED, env_seed: int = 0, walk_seed: int = 0,
                          start: Optional[Site] = None, patch: Optional[EnvironmentPatch] = None,
                          sim_mode: str = "residual") -> SupermartingaleReport:
    """Check ``E[F_{n+1} | eta_n] <= F_n`` at every step of every replica.

    The conditional expectation is ``sum_x eta_n(x) lam^(x.s) m(omega_x)``
    with ``m(omega) = sum_y mu_y lam^(y.s)``. With an integer direction and
    rational ``lam`` everything is computed in exact rationals.
    """
    chk = verify_condition_L(law, s, lam)
    if not chk.ok:
        raise CertificateInvalid(f"Condition L fails at s={list(s)}, lambda={lam}: values {chk.values}")
    d = law.dimension
    start = (0,) * d if start is None else tuple(start)
    env = EnvironmentRealization(law, env_seed, patch)
    extra = list(env.law_table[len(law.support):])
    if extra:
        # patch laws must satisfy the certificate too
        sub = EnvironmentLaw(law.step_set, tuple(extra), tuple(Fraction(1, len(extra)) for _ in extra))
        if not verify_condition_L(sub, s, lam).ok:
            raise CertificateInvalid("a patch law violates the certificate")
    exact = chk.exact
    steps = law.step_set
    if exact:
        s_vec = [int(c) for c in s]
        lam_q = Fraction(lam)
        m = [sum((mu * lam_q ** sum(a * b for a, b in zip(y, s_vec)) for y, mu in mean_offspring(w, steps).items()),
                 Fraction(0)) for w in env.law_table]
        power = lambda l: lam_q ** int(l)  # noqa: E731
    else:
        s_vec = [float(c) for c in s]
        lam_f = float(lam)
        m = [sum(float(mu) * lam_f ** float(np.dot(y, s_vec)) for y, mu in mean_offspring(w, steps).items())
             for w in env.law_table]
        power = lambda l: lam_f ** float(l)  # noqa: E731
    cfg = SimConfig(mode=sim_mode, horizon=horizon)
    ws = replica_seeds(walk_seed, replicas, 1)
    es = replica_seeds(env_seed, replicas, 2) if mode == ANNEALED else None
    sim = BatchSimulator(env, cfg, [start], ws, es)
    violations = []
    F_hist = np.zeros((horizon + 1, replicas))
    steps_checked = 0
    for n in range(horizon + 1):
        rep, coords = sim.rows()
        lidx = env.indices(coords, seeds=None if es is None else sim.env_seeds[rep])
        if exact:
            keys, sums = _level_sums(sim, lidx, s_vec)
        else:
            level = coords @ np.asarray(s_vec, dtype=float)
            sums = sim.counts
        F = [Fraction(0) if exact else 0.0 for _ in range(replicas)]
        E = [Fraction(0) if exact else 0.0 for _ in range(replicas)]
        if exact:
            for (r, l, li), c in zip(keys, sums):
                t = power(l) * int(c)
                F[r] += t
                E[r] += t * m[li]
        else:
            for r, l, li, c in zip(rep, level, lidx, sums):
                t = power(l) * float(c)
                F[r] += t
                E[r] += t * m[li]
        for r in range(replicas):
            F_hist[n, r] = float(F[r])
            if n < horizon:
                steps_checked += 1
                bad = E[r] > F[r] if exact else E[r] > F[r] * (1 + 1e-9)
                if bad:
                    violations.append({"replica": r, "n": n, "F": str(F[r]), "E_next": str(E[r])})
        if n < horizon:
            sim.step()
    mean = F_hist.mean(axis=1)
    se = F_hist.std(axis=1, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(horizon + 1)
    nonincr = bool(np.all(np.diff(mean) <= 4 * np.hypot(se[1:], se[:-1]) + 1e-12))
    return SupermartingaleReport(exact, steps_checked, violations, mean.tolist(), se.tolist(), nonincr,
                                 sim.saturated)


# --------------------------------------------------------------- seed audit


def seed_formula(eps, rho) -> tuple:
    """Offspring law of returning particles: ``p1``, ``p2`` and the margin."""
    p1 = (1 - eps) * rho + 2 * eps * rho * (1 - rho)
    p2 = eps * rho * rho
    return p1, p2, p1 + 2 * p2 - 1


@dataclass
class SeedAudit:
    domain: list
    W: list
    rho_hat: float
    rho_ci: tuple
    rho_by_site: dict
    eps: Fraction
    p1: float
    p2: float
    margin: float
    margin_ci: tuple
    replicas: int
    horizon: int

    @property
    def supercritical(self) -> bool:
        return self.margin > 0

    def as_dict(self) -> dict:
        return {"domain": [list(x) for x in self.domain], "W": [list(x) for x in self.W],
                "rho_hat": self.rho_hat, "rho_ci": list(self.rho_ci),
                "rho_by_site": {",".join(map(str, k)): v for k, v in self.rho_by_site.items()},
                "eps": str(self.eps), "p1": self.p1, "p2": self.p2, "margin": self.margin,
                "margin_ci": list(self.margin_ci), "replicas": self.replicas, "horizon": self.horizon}


def seed_audit(law: EnvironmentLaw, patch: EnvironmentPatch, W: Sequence[Site], replicas: int,
               walk_seed: int = 0, horizon: Optional[int] = None, safety: int = 10) -> SeedAudit:
    """Return-probability audit of a planted patch.

    ``rho_hat`` is the smallest, over starting sites ``y`` in ``W + A``, of the
    fraction of runs of the process restricted to the patch domain that put
    a particle on ``W``. ``eps`` is the smallest branching probability on W.
    """
    steps = law.step_set
    domain = set(patch.sites)
    W = [tuple(int(c) for c in w) for w in W]
    if not set(W) <= domain:
        raise PatchTooSmall("W is not inside the patch domain")
    ring = sorted({tuple(a + b for a, b in zip(w, y)) for w in W for y in steps.steps})
    outside = [y for y in ring if y not in domain]
    if outside:
        raise PatchTooSmall(f"W + A leaves the patch at {outside[:5]}")
    if horizon is None:
        pts = np.array(sorted(domain))
        diam = int((pts.max(axis=0) - pts.min(axis=0)).max()) + 1
        horizon = safety * diam
    env = EnvironmentRealization(law, 0, patch)
    cfg = SimConfig(mode="exact", horizon=horizon, restriction=frozenset(domain))
    eps = min(patch.sites[w].branching_mass() for w in W)
    by_site, counts = {}, {}
    for k, y in enumerate(ring):
        ws = replica_seeds(walk_seed, replicas, 100 + k)
        hits, _ = first_hits(env, cfg, y, W, ws)
        counts[y] = int((hits >= 0).sum())
        by_site[y] = counts[y] / replicas
    y_min = min(ring, key=lambda y: counts[y])
    rho = by_site[y_min]
    ci = clopper_pearson(counts[y_min], replicas)
    e = float(eps)
    p1, p2, margin = seed_formula(e, rho)
    margin_ci = (seed_formula(e, ci[0])[2], seed_formula(e, ci[1])[2])
    return SeedAudit(sorted(domain), W, rho, ci, by_site, eps, p1, p2, margin, margin_ci, replicas, horizon)
