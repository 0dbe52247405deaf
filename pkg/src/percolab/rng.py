"""Counter-based random numbers.

Every random quantity in the package is a pure function of a 64-bit key
built by hashing integers together with SplitMix64. Nothing carries hidden
generator state, so a site's uniform or an ARW stack entry can be recomputed
anywhere, in any order, by either kernel backend.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

DEFAULT_SEED = 0x5EED


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix(*parts: int) -> int:
    """Hash a sequence of integers into one 64-bit key."""
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & MASK64))
    return h


def to_uniform(h: int) -> float:
    """Map a 64-bit key to a double in [0, 1)."""
    return (h >> 11) * _INV53


def splitmix64_array(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64, copy=True)
    z += np.uint64(GOLDEN)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def site_uniforms(key: int, n: int) -> np.ndarray:
    """Uniforms ``to_uniform(mix(key, i))`` for ``i in range(n)``, vectorized."""
    base = np.uint64(splitmix64(int(key) & MASK64))
    idx = np.arange(n, dtype=np.uint64)
    h = splitmix64_array(base ^ idx)
    return (h >> np.uint64(11)).astype(np.float64) * _INV53


def site_uniforms_batch(keys, n: int) -> np.ndarray:
    """Row ``k`` equals ``site_uniforms(keys[k], n)``."""
    base = np.array([splitmix64(int(k) & MASK64) for k in keys], dtype=np.uint64)
    idx = np.arange(n, dtype=np.uint64)
    h = splitmix64_array(base[:, None] ^ idx[None, :])
    return (h >> np.uint64(11)).astype(np.float64) * _INV53
