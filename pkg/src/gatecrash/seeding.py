"""Deterministic seed derivation.

One master seed fans out into independent sub-streams (dataset, weight
init, per-sample attacks, sweep cells) through a splitmix64 mix of the
master seed with a stable hash of string labels.  The same
(master, labels) pair always yields the same stream, on any platform,
which is what makes serial and parallel runs byte-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, *labels) -> int:
    """Fold labels (strings or ints) into the master seed, splitmix-style."""
    state = _splitmix64(int(master) & _MASK)
    for label in labels:
        digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
        state = _splitmix64(state ^ int.from_bytes(digest, "little"))
    return state


def rng_for(master: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
