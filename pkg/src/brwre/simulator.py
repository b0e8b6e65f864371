"""Exact and residual-split population dynamics with occupancy tracking.

The engine evolves any number of independent replicas at once. A population
is a set of rows ``(replica, site)`` with an arbitrary-precision count per
row (numpy object arrays of Python ints). Rows are kept sorted by a packed
int64 key so aggregation, set unions and hit detection are vectorized.

Randomness for the particles at site ``x`` at time ``n`` comes from
:func:`brwre.rng.uniform` keyed by ``(walk_seed, n, x, counter)``, so a draw
at one site never depends on what happens elsewhere.

Splitting ``k`` particles among the atoms of ``omega_x``:

* exact mode: a chain of binomials ``Bin(remaining, p_j / mass_left)`` by
  inversion of keyed uniforms (a keyed Philox generator for ``k > 4096``);
* residual mode, ``k > residual_threshold``: atom ``j`` receives
  ``floor(k p_j)`` (exact integer arithmetic) plus the leftover
  ``R = k - sum floor`` particles, each sent to atom ``j`` with probability
  ``frac(k p_j) / R`` independently. Totals and means are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import binom

from . import rng
from .environment import EnvironmentRealization, _match_rows
from .model import Site, SiteLaw, StepSet

_WALK_TAG = 0x57414C4B
_PPF_MAX = 4096
_EXACT_MAX = 1 << 62


class SaturationOverflow(RuntimeError):
    """Counts exceeded what the configured sampling mode can represent."""


@dataclass(frozen=True)
class SimConfig:
    mode: str = "exact"
    residual_threshold: int = 4096
    horizon: int = 100
    restriction: Optional[frozenset] = None
    walk_seed: int = 0
    window: int = 32
    count_cap: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("exact", "residual"):
            raise ValueError(f"mode must be 'exact' or 'residual', got {self.mode!r}")
        if self.residual_threshold < 1:
            raise ValueError("residual_threshold must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.restriction is not None:
            object.__setattr__(self, "restriction", frozenset(tuple(int(c) for c in s) for s in self.restriction))


@dataclass
class PopulationState:
    """Particle counts of one replica (sites sorted lexicographically)."""

    sites: np.ndarray
    counts: np.ndarray
    time: int
    visited: np.ndarray
    saturated: bool = False

    @classmethod
    def initial(cls, start: Site) -> "PopulationState":
        s = np.array([start], dtype=np.int64)
        return cls(s, np.array([1], dtype=object), 0, s.copy())

    @property
    def total(self) -> int:
        return int(sum(int(c) for c in self.counts))

    def as_dict(self) -> dict[Site, int]:
        return {tuple(int(c) for c in s): int(k) for s, k in zip(self.sites, self.counts)}

    def occupied_set(self) -> set[Site]:
        return {tuple(int(c) for c in s) for s in self.sites}

    def visited_set(self) -> set[Site]:
        return {tuple(int(c) for c in s) for s in self.visited}


@dataclass
class OccupancySets:
    """B (visited by time n), barB (occupied at n), tildeB (occupied on [n, n+window])."""

    time: int
    B: set
    barB: set
    tildeB: set
    window: int
    window_complete: bool = True


@dataclass
class StepRecord:
    n: int
    total: int
    occupied: int
    visited: int
    saturated: bool

    def as_json(self) -> str:
        return json.dumps({"n": self.n, "totalCount": str(self.total), "occupiedCount": self.occupied,
                           "visitedCount": self.visited, "saturated": self.saturated})


@dataclass
class RunResult:
    records: list[StepRecord]
    sets: list[OccupancySets]
    final: PopulationState
    mode: str


# ------------------------------------------------------------------ samplers


class _LawSampler:
    """Precomputed splitting data for one site law."""

    def __init__(self, omega: SiteLaw, steps: StepSet):
        self.probs = omega.probabilities
        self.m = len(self.probs)
        left = Fraction(1)
        cond = []
        for p in self.probs:
            cond.append(float(p / left) if left > 0 else 1.0)
            left -= p
        self.cond = cond
        step_arr = np.array(steps.steps, dtype=np.int64)
        # per atom: (displacements (c, d), multiplicities (c,))
        self.emit = []
        for v in omega.vectors:
            idx = np.array([i for i, _ in v.counts], dtype=np.int64)
            mult = [c for _, c in v.counts]
            self.emit.append((step_arr[idx], mult))

    def split(self, k: np.ndarray, words: list[np.ndarray], seeds: np.ndarray, cfg: SimConfig) -> np.ndarray:
        """Return an (n, m) object array of per-atom particle counts."""
        n = len(k)
        out = np.zeros((n, self.m), dtype=object)
        if self.m == 1:
            out[:, 0] = k
            return out
        if cfg.mode == "residual":
            big = np.array([int(x) > cfg.residual_threshold for x in k], dtype=bool)
        else:
            big = np.zeros(n, dtype=bool)
        if big.any():
            out[big] = self._residual(k[big], [w[big] for w in words], seeds[big])
        small = ~big
        if small.any():
            out[small] = self._chain(k[small], [w[small] for w in words], seeds[small])
        return out

    def _chain(self, k, words, seeds):
        n = len(k)
        out = np.zeros((n, self.m), dtype=object)
        remaining = np.array(k, dtype=object)
        for j in range(self.m - 1):
            q = self.cond[j]
            if q >= 1.0:
                out[:, j] = remaining
                remaining = remaining * 0
                break
            rem_i = np.array([int(r) for r in remaining], dtype=object)
            draw = np.zeros(n, dtype=object)
            fits = np.array([0 < r <= _PPF_MAX for r in rem_i], dtype=bool)
            if fits.any():
                u = rng.uniform(seeds[fits], _WALK_TAG, *[w[fits] for w in words], j)
                remf = rem_i[fits].astype(np.float64)
                x = binom.ppf(u, remf, q)
                x = np.clip(np.nan_to_num(x, nan=0.0), 0, remf).astype(np.int64)
                draw[fits] = x.astype(object)
            for i in np.nonzero(np.array([r > _PPF_MAX for r in rem_i], dtype=bool))[0]:
                r = int(rem_i[i])
                if r > _EXACT_MAX:
                    raise SaturationOverflow(f"exact binomial split of {r} particles is not supported")
                g = rng.make_generator(seeds[i], _WALK_TAG, *[w[i] for w in words], j)
                draw[i] = int(g.binomial(r, q))
            out[:, j] = draw
            remaining = rem_i - draw
        else:
            out[:, self.m - 1] = remaining
        return out

    def _residual(self, k, words, seeds):
        n = len(k)
        out = np.zeros((n, self.m), dtype=object)
        frac = np.zeros((n, self.m), dtype=np.float64)
        kk = [int(x) for x in k]
        for j, p in enumerate(self.probs):
            num, den = p.numerator, p.denominator
            col = []
            for i, x in enumerate(kk):
                q, r = divmod(x * num, den)
                col.append(q)
                frac[i, j] = r / den
            out[:, j] = col
        R = np.array([kk[i] - sum(out[i]) for i in range(n)], dtype=np.int64)
        # sum of fractional parts equals R exactly; renormalise against float error
        for r in range(int(R.max()) if n else 0):
            active = R > r
            if not active.any():
                break
            f = frac[active]
            cdf = np.cumsum(f, axis=1)
            cdf /= cdf[:, -1:]
            u = rng.uniform(seeds[active], _WALK_TAG, *[w[active] for w in words], self.m + r)
            choice = (u[:, None] >= cdf).sum(axis=1)
            choice = np.minimum(choice, self.m - 1)
            rows = np.nonzero(active)[0]
            for row, c in zip(rows, choice):
                out[row, c] += 1
        return out


# ------------------------------------------------------------------ packing


class _Packer:
    """Packs (replica, site) rows into sortable int64 keys."""

    def __init__(self, d: int, n_rep: int):
        self.d = d
        self.rep_bits = max(1, int(n_rep - 1).bit_length())
        # keep n_rep << (bits * d) positive so replica ranges can be sliced
        self.bits = (62 - self.rep_bits) // d
        if self.bits < 4:
            raise OverflowError("too many replicas or dimensions to pack site keys")
        self.offset = 1 << (self.bits - 1)
        self.limit = self.offset - 1

    def pack(self, rep: np.ndarray, coords: np.ndarray) -> np.ndarray:
        if coords.size and np.abs(coords).max() > self.limit:
            raise OverflowError("site coordinates exceed the packing range")
        key = rep.astype(np.int64) << np.int64(self.bits * self.d)
        for i in range(self.d):
            key = key | ((coords[:, i] + self.offset) << np.int64(self.bits * i))
        return key

    def unpack(self, key: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mask = np.int64((1 << self.bits) - 1)
        coords = np.empty((len(key), self.d), dtype=np.int64)
        for i in range(self.d):
            coords[:, i] = ((key >> np.int64(self.bits * i)) & mask) - self.offset
        rep = key >> np.int64(self.bits * self.d)
        return rep, coords


# ------------------------------------------------------------------ engine


class BatchSimulator:
    """Independent replicas evolved together.

    ``env_seeds`` holds one environment seed per replica (annealed batches);
    ``None`` shares ``env.env_seed`` (quenched). ``walk_seeds`` holds one walk
    seed per replica.
    """

    def __init__(self, env: EnvironmentRealization, cfg: SimConfig, starts, walk_seeds: Sequence[int],
                 env_seeds: Optional[Sequence[int]] = None):
        self.env = env
        self.cfg = cfg
        self.d = env.law.dimension
        starts = np.asarray(starts, dtype=np.int64).reshape(-1, self.d)
        n_rep = len(walk_seeds)
        if len(starts) == 1 and n_rep > 1:
            starts = np.repeat(starts, n_rep, axis=0)
        if len(starts) != n_rep:
            raise ValueError("one start per replica required")
        self.n_rep = n_rep
        self.walk_seeds = np.array([int(s) & rng.MASK64 for s in walk_seeds], dtype=np.uint64)
        self.env_seeds = None if env_seeds is None else np.array([int(s) & rng.MASK64 for s in env_seeds], dtype=np.uint64)
        self.packer = _Packer(self.d, n_rep)
        self.samplers = [_LawSampler(w, env.law.step_set) for w in env.law_table]
        self.steps = np.array(env.law.step_set.steps, dtype=np.int64)
        self.time = 0
        self.saturated = False
        rep = np.arange(n_rep, dtype=np.int64)
        self.keys = self.packer.pack(rep, starts)
        order = np.argsort(self.keys, kind="stable")
        self.keys = self.keys[order]
        self.counts = np.ones(n_rep, dtype=object)
        self.visited = self.keys.copy()
        self._restrict = None
        if cfg.restriction is not None:
            self._restrict = np.array(sorted(cfg.restriction), dtype=np.int64).reshape(-1, self.d)

    @classmethod
    def from_state(cls, state: PopulationState, env: EnvironmentRealization, cfg: SimConfig) -> "BatchSimulator":
        sim = cls(env, cfg, state.sites[:1] if len(state.sites) else np.zeros((1, env.law.dimension)), [cfg.walk_seed])
        rep = np.zeros(len(state.sites), dtype=np.int64)
        sim.keys = sim.packer.pack(rep, state.sites)
        order = np.argsort(sim.keys, kind="stable")
        sim.keys = sim.keys[order]
        sim.counts = np.array(list(state.counts), dtype=object)[order]
        sim.visited = np.unique(sim.packer.pack(np.zeros(len(state.visited), dtype=np.int64), state.visited))
        sim.time = state.time
        sim.saturated = state.saturated
        return sim

    # -- views

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        return self.packer.unpack(self.keys)

    def replica_slice(self, keys: np.ndarray, r: int) -> np.ndarray:
        lo = np.int64(r) << np.int64(self.packer.bits * self.d)
        hi = np.int64(r + 1) << np.int64(self.packer.bits * self.d)
        return keys[np.searchsorted(keys, lo):np.searchsorted(keys, hi)]

    def coords_of(self, keys: np.ndarray) -> np.ndarray:
        return self.packer.unpack(keys)[1]

    def state(self, r: int = 0) -> PopulationState:
        lo = np.int64(r) << np.int64(self.packer.bits * self.d)
        hi = np.int64(r + 1) << np.int64(self.packer.bits * self.d)
        a, b = np.searchsorted(self.keys, lo), np.searchsorted(self.keys, hi)
        return PopulationState(self.coords_of(self.keys[a:b]), self.counts[a:b].copy(), self.time,
                               self.coords_of(self.replica_slice(self.visited, r)), self.saturated)

    def totals(self) -> list[int]:
        rep = self.keys >> np.int64(self.packer.bits * self.d)
        out = [0] * self.n_rep
        if len(rep):
            starts = np.flatnonzero(np.r_[True, rep[1:] != rep[:-1]])
            sums = np.add.reduceat(self.counts, starts)
            for r, s in zip(rep[starts], sums):
                out[int(r)] = int(s)
        return out

    def _per_rep_sizes(self, keys) -> np.ndarray:
        rep = keys >> np.int64(self.packer.bits * self.d)
        return np.bincount(rep, minlength=self.n_rep)

    # -- dynamics

    def step(self) -> None:
        rep, coords = self.rows()
        if len(rep) == 0:
            self.time += 1
            return
        env_seed = None if self.env_seeds is None else self.env_seeds[rep]
        law_idx = self.env.indices(coords, seeds=env_seed)
        seeds = self.walk_seeds[rep]
        time_word = np.full(len(rep), self.time, dtype=np.int64)
        dest_rep, dest_coords, dest_amt = [], [], []
        for li in np.unique(law_idx):
            sel = law_idx == li
            sampler = self.samplers[li]
            words = [time_word[sel]] + [coords[sel, i] for i in range(self.d)]
            split = sampler.split(self.counts[sel], words, seeds[sel], self.cfg)
            r_sel, c_sel = rep[sel], coords[sel]
            for j, (disp, mult) in enumerate(sampler.emit):
                nj = split[:, j]
                live = np.array([x != 0 for x in nj], dtype=bool)
                if not live.any():
                    continue
                for y, c in zip(disp, mult):
                    dest_rep.append(r_sel[live])
                    dest_coords.append(c_sel[live] + y)
                    dest_amt.append(nj[live] * c if c != 1 else nj[live])
        rep2 = np.concatenate(dest_rep)
        coords2 = np.concatenate(dest_coords)
        amt = np.concatenate(dest_amt)
        if self._restrict is not None:
            keep, _ = _match_rows(coords2, self._restrict)
            rep2, coords2, amt = rep2[keep], coords2[keep], amt[keep]
        keys = self.packer.pack(rep2, coords2)
        if len(keys):
            order = np.argsort(keys, kind="stable")
            keys, amt = keys[order], amt[order]
            starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
            self.keys = keys[starts]
            self.counts = np.add.reduceat(amt, starts)
        else:
            self.keys = keys
            self.counts = np.zeros(0, dtype=object)
        cap = self.cfg.count_cap
        if cap is not None and len(self.counts):
            over = np.array([c > cap for c in self.counts], dtype=bool)
            if over.any():
                if self.cfg.mode == "exact":
                    raise SaturationOverflow(f"count exceeded cap {cap} in exact mode")
                self.counts[over] = cap
                self.saturated = True
        self.visited = np.union1d(self.visited, self.keys)
        self.time += 1


# ------------------------------------------------------------- single runs


def step(state: PopulationState, env: EnvironmentRealization, cfg: SimConfig) -> PopulationState:
    """Advance one replica by one generation."""
    sim = BatchSimulator.from_state(state, env, cfg)
    sim.step()
    return sim.state(0)


def _to_set(coords: np.ndarray) -> set:
    return {tuple(int(c) for c in row) for row in coords}


def run(env: EnvironmentRealization, cfg: SimConfig, start: Site, keep_sets: bool = True) -> RunResult:
    """Run one replica for ``cfg.horizon`` steps.

    ``tildeB`` at time n is the set of sites occupied at every time in
    ``[n, n + window]``; for ``n > horizon - window`` the window is cut at
    the horizon and ``window_complete`` is False.
    """
    sim = BatchSimulator(env, cfg, [start], [cfg.walk_seed])
    occ_keys = [sim.keys.copy()]
    vis_keys = [sim.visited.copy()] if keep_sets else []
    records = [StepRecord(0, 1, 1, 1, False)]
    for _ in range(cfg.horizon):
        sim.step()
        records.append(StepRecord(sim.time, sim.totals()[0], len(sim.keys), len(sim.visited), sim.saturated))
        if keep_sets:
            occ_keys.append(sim.keys.copy())
            vis_keys.append(sim.visited.copy())
    sets = []
    if keep_sets:
        H, W = cfg.horizon, cfg.window
        for n in range(H + 1):
            tilde = occ_keys[n]
            for m in range(n + 1, min(n + W, H) + 1):
                tilde = np.intersect1d(tilde, occ_keys[m], assume_unique=True)
            sets.append(OccupancySets(n, _to_set(sim.coords_of(vis_keys[n])), _to_set(sim.coords_of(occ_keys[n])),
                                      _to_set(sim.coords_of(tilde)), W, n + W <= H))
    return RunResult(records, sets, sim.state(0), cfg.mode)


def first_hits(env: EnvironmentRealization, cfg: SimConfig, start: Site, targets: Iterable[Site],
               walk_seeds: Sequence[int], env_seeds: Optional[Sequence[int]] = None) -> tuple[np.ndarray, bool]:
    """First time any target site is occupied, per replica (-1 if censored).

    Returns the hit times and whether any replica saturated.
    """
    sim = BatchSimulator(env, cfg, [start], walk_seeds, env_seeds)
    targets = np.array(list(targets), dtype=np.int64).reshape(-1, sim.d)
    hits = np.full(sim.n_rep, -1, dtype=np.int64)

    def check():
        rep, coords = sim.rows()
        found, _ = _match_rows(coords, targets)
        newly = np.unique(rep[found])
        newly = newly[hits[newly] < 0]
        hits[newly] = sim.time
        return newly

    check()
    alive = hits < 0
    while sim.time < cfg.horizon and alive.any():
        _drop_replicas(sim, ~alive)
        sim.step()
        check()
        alive = hits < 0
    return hits, sim.saturated


def _drop_replicas(sim: BatchSimulator, done: np.ndarray) -> None:
    """Stop evolving finished replicas (their rows are removed)."""
    if not done.any():
        return
    rep = sim.keys >> np.int64(sim.packer.bits * sim.d)
    keep = ~done[rep]
    sim.keys, sim.counts = sim.keys[keep], sim.counts[keep]


def first_hit(env: EnvironmentRealization, cfg: SimConfig, start: Site, target: Site) -> Optional[int]:
    """Least n <= horizon with a particle at ``target``; None if censored."""
    hits, _ = first_hits(env, cfg, start, [target], [cfg.walk_seed])
    return None if hits[0] < 0 else int(hits[0])


def write_trajectory(records: Iterable[StepRecord], path, mode: str) -> None:
    with open(path, "w") as fh:
        for rec in records:
            obj = json.loads(rec.as_json())
            obj["mode"] = mode
            fh.write(json.dumps(obj) + "\n")
