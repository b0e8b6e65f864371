"""Simultaneous construction of the processes started from every site.

All processes read the same family of offspring draws ``v^{x,i}(n)``: the
``i``-th particle at site ``x`` at (absolute) time ``n`` picks an atom of
``omega_x`` from a keyed uniform of ``(draw_seed, n, x, i)``. The process
started at ``z`` is run with its clock shifted by ``m0 = T(0, z)`` when that
hitting time is finite, so its particles reuse the draws of the base
process. This gives ``eta^z_n(x) <= eta^0_{n+m0}(x)`` pathwise and hence
``T(0, z) + T(z, y) >= T(0, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rng
from .environment import EnvironmentRealization
from .model import Site
from .simulator import _Packer

_DRAW_TAG = 0x434F5550
POPULATION_CAP = 10**6


class PopulationCapExceeded(RuntimeError):
    pass


class SharedDraws:
    """Keyed i.i.d. offspring choices ``v^{x,i}(n)`` given an environment."""

    def __init__(self, env: EnvironmentRealization, draw_seed: int):
        self.env = env
        self.draw_seed = int(draw_seed) & rng.MASK64
        self._cuts = [rng.exact_thresholds(w.probabilities) for w in env.law_table]

    def atoms(self, law_idx: np.ndarray, coords: np.ndarray, index: np.ndarray, time: int) -> np.ndarray:
        """Atom index of each particle (vectorized over rows)."""
        out = np.zeros(len(coords), dtype=np.int64)
        for li in np.unique(law_idx):
            cuts = self._cuts[li]
            if len(cuts) == 0:
                continue
            sel = law_idx == li
            c = coords[sel]
            u = rng.uniform_int53(self.draw_seed, _DRAW_TAG, time, *[c[:, j] for j in range(c.shape[1])], index[sel])
            out[sel] = np.searchsorted(cuts, u, side="right")
        return out

    def vector_at(self, x: Site, i: int, n: int):
        """The offspring vector drawn by particle ``i`` at ``(x, n)``."""
        coords = np.array([x], dtype=np.int64)
        li = self.env.indices(coords)
        a = self.atoms(li, coords, np.array([i], dtype=np.int64), n)[0]
        return self.env.law_table[int(li[0])].vectors[int(a)]


@dataclass
class Trajectory:
    """Packed site keys and counts per time, plus first-visit times."""

    offset: int
    keys: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    visit_keys: np.ndarray = None
    visit_times: np.ndarray = None

    def first_visit(self, key: int) -> Optional[int]:
        j = np.searchsorted(self.visit_keys, key)
        if j < len(self.visit_keys) and self.visit_keys[j] == key:
            return int(self.visit_times[j])
        return None


class _CoupledEngine:
    def __init__(self, draws: SharedDraws, cap: int):
        self.draws = draws
        self.env = draws.env
        self.d = self.env.law.dimension
        self.cap = cap
        self.packer = _Packer(self.d, 1)
        self.steps = np.array(self.env.law.step_set.steps, dtype=np.int64)
        # per law: (n_atoms, n_steps) child-count matrix
        n_steps = len(self.steps)
        self.child = []
        for w in self.env.law_table:
            m = np.zeros((len(w.vectors), n_steps), dtype=np.int64)
            for a, v in enumerate(w.vectors):
                for i, c in v.counts:
                    m[a, i] = c
            self.child.append(m)

    def key(self, coords: np.ndarray) -> np.ndarray:
        return self.packer.pack(np.zeros(len(coords), dtype=np.int64), np.asarray(coords, dtype=np.int64))

    def step(self, keys: np.ndarray, counts: np.ndarray, time: int) -> tuple[np.ndarray, np.ndarray]:
        total = int(counts.sum())
        if total > self.cap:
            raise PopulationCapExceeded(f"{total} live particles exceed the cap {self.cap}")
        coords = self.packer.unpack(keys)[1]
        law = self.env.indices(coords)
        # one row per particle, indices 1..eta_n(x) in site order
        row = np.repeat(np.arange(len(keys)), counts)
        first = np.cumsum(counts) - counts
        index = np.arange(total, dtype=np.int64) - first[row] + 1
        atom = self.draws.atoms(law[row], coords[row], index, time)
        # number of particles per (site, atom), then children per step
        n_atoms = max(len(c) for c in self.child)
        grp = row * n_atoms + atom
        u, cnt = np.unique(grp, return_counts=True)
        site, a = u // n_atoms, u % n_atoms
        out_keys, out_counts = [], []
        for li in np.unique(law[site]):
            sel = law[site] == li
            kids = self.child[li][a[sel]] * cnt[sel][:, None]  # (rows, n_steps)
            src = coords[site[sel]]
            for j, y in enumerate(self.steps):
                live = kids[:, j] > 0
                if live.any():
                    out_keys.append(self.key(src[live] + y))
                    out_counts.append(kids[live, j])
        k = np.concatenate(out_keys)
        c = np.concatenate(out_counts)
        order = np.argsort(k, kind="stable")
        k, c = k[order], c[order]
        starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
        return k[starts], np.add.reduceat(c, starts)

    def run(self, start: Site, horizon: int, offset: int) -> Trajectory:
        tr = Trajectory(offset)
        keys = self.key(np.array([start]))
        counts = np.ones(1, dtype=np.int64)
        vk, vt = keys.copy(), np.zeros(1, dtype=np.int64)
        tr.keys.append(keys)
        tr.counts.append(counts)
        for n in range(horizon):
            keys, counts = self.step(keys, counts, n + offset)
            tr.keys.append(keys)
            tr.counts.append(counts)
            new = keys[~np.isin(keys, vk, assume_unique=True)]
            if len(new):
                vk = np.r_[vk, new]
                vt = np.r_[vt, np.full(len(new), n + 1, dtype=np.int64)]
                order = np.argsort(vk)
                vk, vt = vk[order], vt[order]
        tr.visit_keys, tr.visit_times = vk, vt
        return tr


@dataclass
class CoupledFamily:
    env_seed: int
    draw_seed: int
    horizon: int
    starts: list
    base: Trajectory
    per_start: dict
    m0: dict  # z -> T(0, z) or None
    domination_violations: list
    _engine: _CoupledEngine = field(repr=False, default=None)

    def T(self, x: Site, y: Site) -> Optional[int]:
        """Hitting time of ``y`` by the process from ``x`` (x = origin or a start)."""
        x, y = tuple(x), tuple(y)
        tr = self.base if x == (0,) * len(x) else self.per_start[x]
        return tr.first_visit(int(self._engine.key(np.array([y]))[0]))


def _domination(base: Trajectory, tr: Trajectory) -> list:
    """(n, key) pairs where eta^z_n(key) > eta^0_{n+m0}(key)."""
    bad = []
    m0 = tr.offset
    for n, (k, c) in enumerate(zip(tr.keys, tr.counts)):
        if n + m0 >= len(base.keys):
            break
        bk, bc = base.keys[n + m0], base.counts[n + m0]
        j = np.searchsorted(bk, k)
        j = np.minimum(j, len(bk) - 1)
        present = bk[j] == k
        dominated = present & (bc[j] >= c)
        for key in k[~dominated]:
            bad.append((n, int(key)))
    return bad


def coupled_run(env: EnvironmentRealization, draw_seed: int, starts: Iterable[Site], horizon: int,
                cap: int = POPULATION_CAP) -> CoupledFamily:
    """Build the processes from the origin and from each start with shared draws.

    The base process runs ``horizon`` steps; the process from ``z`` runs
    ``horizon - m0`` steps with clock offset ``m0 = T(0, z)``, or ``horizon``
    steps with offset 0 when ``T(0, z)`` is censored.
    """
    draws = SharedDraws(env, draw_seed)
    eng = _CoupledEngine(draws, cap)
    d = env.law.dimension
    origin = (0,) * d
    base = eng.run(origin, horizon, 0)
    per, m0s, viol = {}, {}, []
    for z in starts:
        z = tuple(int(c) for c in z)
        m0 = base.first_visit(int(eng.key(np.array([z]))[0]))
        m0s[z] = m0
        if m0 is None:
            per[z] = eng.run(z, horizon, 0)
            continue
        tr = eng.run(z, horizon - m0, m0)
        per[z] = tr
        for n, key in _domination(base, tr):
            viol.append({"z": list(z), "n": n, "site": [int(c) for c in eng.packer.unpack(np.array([key]))[1][0]]})
    return CoupledFamily(env.env_seed, draws.draw_seed, horizon, list(per), base, per, m0s, viol, eng)


@dataclass
class SubadditivityReport:
    evaluated: int
    skipped: int
    violations: list
    domination_violations: list

    @property
    def ok(self) -> bool:
        return not self.violations and not self.domination_violations

    def as_dict(self) -> dict:
        return {"evaluated": self.evaluated, "skipped": self.skipped,
                "violations": self.violations, "domination_violations": self.domination_violations}


def subadditivity_audit(family: CoupledFamily, triples: Sequence[tuple]) -> SubadditivityReport:
    """Check ``T(0,z) + T(z,y) >= T(0,y)`` on triples ``(z, y)``.

    Triples with a censored ``T(0,z)`` or ``T(z,y)`` are skipped. A censored
    ``T(0,y)`` next to finite ``T(0,z)``, ``T(z,y)`` is a violation, since the
    process from z only ran ``horizon - m0`` steps.
    """
    viol, ok, skipped = [], 0, 0
    for trip in triples:
        z, y = (tuple(t) for t in trip[-2:])
        t0z = family.m0.get(z)
        tzy = family.T(z, y) if t0z is not None else None
        if t0z is None or tzy is None:
            skipped += 1
            continue
        t0y = family.T((0,) * len(z), y)
        ok += 1
        if t0y is None or t0z + tzy < t0y:
            viol.append({"z": list(z), "y": list(y), "T0z": t0z, "Tzy": tzy, "T0y": t0y,
                         "env_seed": family.env_seed, "draw_seed": family.draw_seed, "horizon": family.horizon})
    return SubadditivityReport(ok, skipped, viol, list(family.domination_violations))
