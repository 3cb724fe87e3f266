"""Deterministic seeded random streams (splitmix-style).

Every stochastic step in the pipeline (bootstrap draws, feature subsampling,
hyperparameter sampling) reads from a SplitMix64 stream whose seed is derived
from the run seed plus structural indices (tree index, trial index, fold
index). The generator is specified bit-exactly so results are reproducible
across processes and worker counts:

    state_{k} = (state_{k-1} + 0x9E3779B97F4A7C15) mod 2^64
    output_k  = mix64(state_k)

where mix64 is the 64-bit finalizer

    z = x;  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (mod 2^64)
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB  (mod 2^64)
            return z ^ (z >> 31)

Integer draws use modulo reduction: randbelow(n) = next_u64() % n. The
modulo bias is irrelevant at these range sizes and keeps the contract easy
to restate.
"""

from __future__ import annotations

import numpy as np

M64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    x &= M64
    x = ((x ^ (x >> 30)) * _MUL1) & M64
    x = ((x ^ (x >> 27)) * _MUL2) & M64
    return x ^ (x >> 31)


def derive(seed: int, *path: int) -> int:
    """Derive a child seed from a parent seed and a path of indices.

    Folding is order-sensitive: derive(s, a, b) != derive(s, b, a) in
    general, so (seed, tree), (seed, trial, fold) and similar paths get
    independent streams.
    """
    s = mix64((seed + GAMMA) & M64)
    for x in path:
        s = mix64(((s ^ ((x & M64) * GAMMA) & M64) + GAMMA) & M64)
    return s


class SplitMix64:
    """Stateful stream over the recurrence documented in the module header."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & M64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & M64
        return mix64(self.state)

    def randbelow(self, n: int) -> int:
        """Uniform-ish integer in [0, n) by modulo reduction."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        return self.next_u64() % n

    def block(self, n: int) -> np.ndarray:
        """Next n outputs as a uint64 array, bit-equal to n next_u64 calls.

        The state advance is linear (state_k = state_0 + k * GAMMA), so the
        whole block vectorizes.
        """
        i = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            x = np.uint64(self.state) + i * np.uint64(GAMMA)
            z = (x ^ (x >> np.uint64(30))) * np.uint64(_MUL1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
            out = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GAMMA) & M64
        return out

    def bootstrap_indices(self, n_rows: int, n_draws: int) -> np.ndarray:
        """n_draws row indices drawn with replacement from [0, n_rows)."""
        return (self.block(n_draws) % np.uint64(n_rows)).astype(np.int64)

    def sample_distinct(self, m: int, p: int) -> np.ndarray:
        """m distinct integers from [0, p), returned in ascending order.

        Partial Fisher-Yates: draw j = randbelow(p - i) and swap slot i with
        slot i + j, consuming exactly m stream outputs.
        """
        if not 0 < m <= p:
            raise ValueError(f"cannot sample {m} distinct values from range {p}")
        arr = list(range(p))
        for i in range(m):
            j = i + self.randbelow(p - i)
            arr[i], arr[j] = arr[j], arr[i]
        return np.array(sorted(arr[:m]), dtype=np.int64)
