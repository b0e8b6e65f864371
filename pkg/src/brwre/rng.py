"""Stateless keyed random bits.

Every random draw in the package is a pure function of a 64-bit seed and a
tuple of integer words (site coordinates, time, particle index, counter).
Words are taken as two's-complement 64-bit integers, so results are the same
on every platform regardless of native byte order.

The mixing function is the SplitMix64 finalizer applied once per word.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))
_TWO53 = 1 << 53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _as_u64(x) -> np.ndarray:
    """View integers (Python ints or int arrays) as uint64 bit patterns."""
    if isinstance(x, (int, np.integer)):
        return np.array([int(x) & MASK64], dtype=np.uint64)
    arr = np.asarray(x)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype == object:
        return np.array([int(v) & MASK64 for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
    return arr.astype(np.int64).view(np.uint64)


def hash_words(seed, *words) -> np.ndarray:
    """Return uint64 hashes of ``(seed, *words)``, broadcasting array arguments."""
    with np.errstate(over="ignore"):
        h = _mix(_as_u64(seed) ^ _GOLDEN)
        for i, w in enumerate(words):
            w64 = _as_u64(w)
            h = _mix(h ^ _mix(w64 + _GOLDEN * np.uint64(i + 1)))
    return h


def uniform(seed, *words) -> np.ndarray:
    """Uniform variates strictly inside (0, 1), 53-bit resolution."""
    h = hash_words(seed, *words)
    return ((h >> _S11).astype(np.float64) + 0.5) * (1.0 / _TWO53)


def uniform_int53(seed, *words) -> np.ndarray:
    """Top 53 bits of the hash as int64 values in [0, 2**53)."""
    return (hash_words(seed, *words) >> _S11).astype(np.int64)


def derive_seed(seed: int, *words: int) -> int:
    """Derive a child 64-bit seed (used to split replicas and streams)."""
    return int(hash_words(seed, *words)[0])


def exact_thresholds(weights: Sequence[Fraction]) -> np.ndarray:
    """Integer inverse-CDF cut points on the 53-bit grid.

    ``searchsorted(thresholds, u53, side="right")`` maps a 53-bit uniform
    integer to category ``i`` with probability within ``2**-53`` of
    ``weights[i]``; the cut points are computed in exact rational arithmetic.
    """
    cum = Fraction(0)
    cuts = []
    for w in weights[:-1]:
        cum += Fraction(w)
        cuts.append((cum.numerator * _TWO53) // cum.denominator)
    return np.array(cuts, dtype=np.int64)


def make_generator(seed, *words) -> np.random.Generator:
    """A numpy Generator whose Philox key is derived from ``(seed, *words)``."""
    key = int(hash_words(seed, *words)[0])
    return np.random.Generator(np.random.Philox(key=key))
