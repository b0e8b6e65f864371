"""Lazily realized i.i.d. environments on Z^d.

``omega_at(x)`` is a pure function of ``(law, env_seed, x)``: the site
coordinates are hashed with the seed (see :mod:`brwre.rng`) and the 53-bit
result is mapped through Q's cumulative weights, with cut points computed
exactly from the rational weights. Patched sites override the draw.

Law indices refer to :attr:`EnvironmentRealization.law_table`: the support
of Q first, then any laws introduced by a patch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import rng
from .model import EnvironmentLaw, Site, SiteLaw

_ENV_TAG = 0x454E56  # stream tag for environment draws


@dataclass(frozen=True)
class EnvironmentPatch:
    """An explicit local configuration overriding the i.i.d. draw."""

    sites: Mapping[Site, SiteLaw] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sites", {tuple(int(c) for c in k): v for k, v in dict(self.sites).items()})


class EnvironmentRealization:
    def __init__(self, law: EnvironmentLaw, env_seed: int, patch: Optional[EnvironmentPatch] = None):
        self.law = law
        self.env_seed = int(env_seed) & rng.MASK64
        self.patch = patch if patch is not None else EnvironmentPatch()
        table = list(law.support)
        self._patch_index: dict[Site, int] = {}
        for site, omega in self.patch.sites.items():
            if len(site) != law.dimension:
                raise ValueError(f"patch site {site} has wrong dimension")
            try:
                i = table.index(omega)
            except ValueError:
                table.append(omega)
                i = len(table) - 1
            self._patch_index[site] = i
        self.law_table: tuple[SiteLaw, ...] = tuple(table)
        self._cuts = rng.exact_thresholds(law.weights)
        self._cache: dict[Site, int] = {}
        if self._patch_index:
            keys = np.array(list(self._patch_index), dtype=np.int64)
            self._patch_sites = keys
            self._patch_values = np.array(list(self._patch_index.values()), dtype=np.int64)
        else:
            self._patch_sites = None

    def with_patch(self, patch: EnvironmentPatch) -> "EnvironmentRealization":
        merged = dict(self.patch.sites)
        merged.update(patch.sites)
        return EnvironmentRealization(self.law, self.env_seed, EnvironmentPatch(merged))

    def with_seed(self, env_seed: int) -> "EnvironmentRealization":
        return EnvironmentRealization(self.law, env_seed, self.patch)

    def omega_at(self, x: Site) -> int:
        x = tuple(int(c) for c in x)
        idx = self._cache.get(x)
        if idx is None:
            idx = int(self.indices(np.array([x], dtype=np.int64))[0])
            self._cache[x] = idx
        return idx

    def law_at(self, x: Site) -> SiteLaw:
        return self.law_table[self.omega_at(x)]

    def indices(self, coords: np.ndarray, seeds=None) -> np.ndarray:
        """Vectorized law indices for an ``(N, d)`` coordinate array.

        ``seeds`` optionally gives one environment seed per row (annealed
        batches); by default the realization's own seed is used.
        """
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.law.dimension)
        seed = self.env_seed if seeds is None else np.asarray(seeds, dtype=np.uint64)
        out = draw_indices(self._cuts, seed, coords)
        if self._patch_sites is not None and len(coords):
            hit, which = _match_rows(coords, self._patch_sites)
            out[hit] = self._patch_values[which[hit]]
        return out


def draw_indices(cuts: np.ndarray, seed, coords: np.ndarray) -> np.ndarray:
    if len(cuts) == 0:
        return np.zeros(len(coords), dtype=np.int64)
    words = [coords[:, i] for i in range(coords.shape[1])]
    u = rng.uniform_int53(seed, _ENV_TAG, *words)
    return np.searchsorted(cuts, u, side="right").astype(np.int64)


def _match_rows(rows: np.ndarray, table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each row, whether it occurs in ``table`` and at which position."""
    both = np.concatenate([table, rows])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    t_inv, r_inv = inv[: len(table)], inv[len(table):]
    lookup = np.full(inv.max() + 1, -1, dtype=np.int64)
    lookup[t_inv] = np.arange(len(table))
    which = lookup[r_inv]
    return which >= 0, np.maximum(which, 0)
