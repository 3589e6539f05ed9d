"""Keyed counter-based pseudorandom function (splitmix64 finalizer).

The same function is exposed in a scalar form (plain Python ints) and a
vectorized numpy form; both return identical 64-bit words, which is what lets
dense and key-derived scatterer storage agree bit for bit.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def prf(key: int, counter: int) -> int:
    """64-bit word for ``(key, counter)``; counter-th output of the key's stream."""
    base = mix64((key & MASK64) ^ GOLDEN)
    return mix64(base + ((counter + 1) * GOLDEN))


def prf_uniform(key: int, counter: int) -> float:
    return (prf(key, counter) >> 11) * _UNIT


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def prf_array(key, counters) -> np.ndarray:
    """Vectorized :func:`prf`; ``key`` and ``counters`` broadcast together."""
    key = np.asarray(key, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64_array(key ^ np.uint64(GOLDEN))
        return _mix64_array(base + (counters + np.uint64(1)) * np.uint64(GOLDEN))


def prf_uniform_array(key, counters) -> np.ndarray:
    return (prf_array(key, counters) >> np.uint64(11)).astype(np.float64) * _UNIT


def derive_seed(master_seed: int, index: int) -> int:
    """Replica seed ``PRF(master_seed, index)``; depends on nothing else."""
    return prf(master_seed, index)
