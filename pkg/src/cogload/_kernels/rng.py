"""Counter-based SplitMix64 stream shared by both kernel backends.

The generator is a pure function of (seed, counter), so any backend that
performs 64-bit wrapping integer arithmetic reproduces the exact stream:
draw i of stream `seed` is mix64(seed + PHI * (i + 1)).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
PHI = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def sm64(seed: int, counter: int) -> int:
    """Value of stream `seed` at position `counter`, as a Python int in [0, 2^64)."""
    z = (seed + PHI * (counter + 1)) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def sm64_array(seed: int, counters: np.ndarray) -> np.ndarray:
    """Vectorized sm64 over a uint64 counter array. Identical values to sm64()."""
    z = np.uint64(seed & MASK64) + np.uint64(PHI) * (counters + np.uint64(1))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))
