"""Seed derivation.

Every random object is keyed by a 64-bit seed. Child seeds are produced with
the SplitMix64 finalizer::

    z = (x + 0x9E3779B97F4A7C15) mod 2^64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2^64
    z =  z ^ (z >> 31)

``mix(base, k1, k2, ...)`` folds each key in as ``h = splitmix64(h ^ k)``
starting from ``h = splitmix64(base)``. String keys are first reduced to
64 bits with an 8-byte BLAKE2b digest, so probe names can be used directly.
Per-trial seeds are therefore a pure function of (base seed, probe id,
trial index) and do not depend on execution order.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _key(k) -> int:
    if isinstance(k, str):
        return int.from_bytes(hashlib.blake2b(k.encode(), digest_size=8).digest(), "little")
    return int(k) & MASK64


def mix(base: int, *keys) -> int:
    h = splitmix64(int(base) & MASK64)
    for k in keys:
        h = splitmix64(h ^ _key(k))
    return h


def stream(seed: int, lane: int = 0) -> np.random.Generator:
    """Counter-based generator: Philox keyed by ``seed``, counter word 1 = ``lane``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64, counter=(int(lane) & MASK64) << 64))
