"""SplitMix64, the one pseudo-random generator used across the package.

The generator is small enough to re-implement from this description:

    state <- (state + 0x9E3779B97F4A7C15) mod 2**64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    output z ^ (z >> 31)

A uniform double in [0, 1) is ``(output >> 11) * 2**-53``.

Independent streams (one per signal sample, per shift, ...) are seeded with
``stream_seed(seed, index) = mix64(seed ^ mix64(index))``, where ``mix64`` is
the output function above applied to its argument without advancing any state.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, index: int) -> int:
    return mix64((seed & MASK64) ^ mix64(index))


class SplitMix64:
    """Scalar generator; ``draw_uniform`` below is the vectorised equivalent."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53


def draw_u64(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the generator seeded with ``seed``."""
    # uint64 array arithmetic wraps modulo 2**64, which is what we want.
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = k * np.uint64(GAMMA) + np.uint64(seed & MASK64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def draw_uniform(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Float64 uniforms in [0, 1), identical to repeated ``next_float`` calls."""
    return (draw_u64(seed, count, start) >> np.uint64(11)).astype(np.float64) * 2.0**-53
