"""SplitMix64 counter-based generator, usable from numba kernels.

State advances by the golden-ratio increment ``0x9E3779B97F4A7C15``; each
output is the state passed through the finaliser with multipliers
``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB`` (shifts 30, 27, 31).
Run ``r`` of a batch seeded with ``seed`` starts from ``mix64(seed ^ r)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
INV53 = 1.0 / 9007199254740992.0

__all__ = ["mix64", "stream_key", "next_u64", "next_double", "SplitMix64"]


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@njit(cache=True)
def stream_key(seed, run):
    return mix64(seed ^ run)


@njit(cache=True)
def next_u64(st):
    st[0] = st[0] + GAMMA
    return mix64(st[0])


@njit(cache=True)
def next_double(st):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(st) >> S11) * INV53


class SplitMix64:
    """Small Python-side wrapper, mostly for tests and reproducibility checks."""

    def __init__(self, seed: int, run: int = 0):
        self.state = np.array([stream_key(np.uint64(seed), np.uint64(run))], dtype=np.uint64)

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def random(self, size: int | None = None):
        if size is None:
            return next_double(self.state)
        return np.array([next_double(self.state) for _ in range(size)])
