"""Seed derivation for independent, order-free random streams.

Child streams are keyed by ``(master_seed, *keys)`` through
:class:`numpy.random.SeedSequence`, so the stream used by a replication does
not depend on how many other streams were drawn before it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    k = int(key)
    if k < 0:
        raise ValueError(f"spawn keys must be nonnegative, got {k}")
    return k


def child_seed(master_seed: int, *keys) -> int:
    """Derive a 64-bit seed from a master seed and a tuple of int/str keys."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key_int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))
