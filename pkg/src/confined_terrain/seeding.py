"""Seed derivation.

Every random stream in the package starts from a 64-bit integer seed. Child
streams (WFC restarts, per-episode seeds, rough-tile noise) are derived by
hashing the parent seed together with integer keys through BLAKE2b, so the
derivation is platform independent and does not depend on call order.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *keys: int) -> int:
    """Return a 64-bit seed derived from ``seed`` and a path of integer keys."""
    h = hashlib.blake2b(digest_size=8, person=b"cterrain")
    h.update(struct.pack("<Q", seed & MASK64))
    for k in keys:
        h.update(struct.pack("<q", int(k)))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """numpy Generator (PCG64) for a derived seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
