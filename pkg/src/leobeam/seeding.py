"""Deterministic RNG substreams derived from one master seed.

Every stochastic subsystem (UE placement, per-link channel draws, weight
init, per-client shuffling) pulls its own named substream, so re-seeding one
subsystem never shifts the draws of another and parallel generation is
order-independent.
"""

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def substream(master_seed: int, label: str, *indices: int) -> np.random.Generator:
    """Generator for the named substream of ``master_seed``.

    The label is hashed so streams like ("channel", ue, sat, epoch, step) and
    ("shuffle", plane) can never collide by index arithmetic alone.
    """
    key = [int(master_seed) & _MASK64, fnv1a_64(label.encode("utf-8"))]
    key.extend(int(i) & _MASK64 for i in indices)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
