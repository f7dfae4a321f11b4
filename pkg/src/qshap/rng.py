"""Seed derivation and generator construction.

Every stochastic routine takes an explicit integer seed. Child seeds are
derived from a parent seed and a tuple of labels by hashing, so that the
value drawn for a given job never depends on evaluation order or thread
count.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_BITS = 64


def derive_seed(parent: int, *labels) -> int:
    """Return a 64-bit child seed for ``parent`` and ``labels``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(parent)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) % (1 << SEED_BITS)))
