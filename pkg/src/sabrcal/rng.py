"""Reproducible random substreams.

Every unit of parallel work (a block of Monte Carlo paths, one annealing
chain at one temperature) draws from its own counter-based Philox stream
whose key is a SplitMix64 hash of the run seed and the unit's indices.  Which
worker runs the unit therefore has no influence on the numbers it sees.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
TWO_PI = 2.0 * math.pi


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stream_key(seed: int, *indices: int) -> tuple[int, int]:
    k0 = splitmix64(seed & MASK64)
    k1 = k0
    for i in indices:
        k1 = splitmix64(k1 ^ (i & MASK64))
    return k0, k1


def substream(seed: int, *indices: int) -> np.random.Generator:
    """Generator for the work unit identified by ``indices`` under ``seed``."""
    key = np.array(stream_key(seed, *indices), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(gen: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Two independent standard normal vectors from exactly ``2 n`` uniforms."""
    u = gen.random((2, n))
    r = np.sqrt(-2.0 * np.log(1.0 - u[0]))  # 1 - u in (0, 1], exact
    c = np.cos(TWO_PI * u[1])
    # sin from cos: |sin| = sqrt((1 - c)(1 + c)), positive on the first half-turn
    s = np.sqrt(np.maximum((1.0 - c) * (1.0 + c), 0.0))
    s = np.where(u[1] < 0.5, s, -s)
    return r * c, r * s
