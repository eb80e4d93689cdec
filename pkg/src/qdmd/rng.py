"""Per-site random streams derived from one master seed.

Every sampling site owns a generator built from ``(seed, label)``, so results
never depend on the order in which sites run or on how many threads run them.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def site_rng(seed: int, label: str) -> np.random.Generator:
    """Return an independent PCG64 generator for one sampling site."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *_label_words(label)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
