"""Keyed, reproducible random streams.

Every source of randomness in a run is derived from one master seed plus a
structured key (round, client id, purpose tag, ...).  Two streams with equal
keys produce identical sequences regardless of process, thread schedule, or
the order in which streams are created.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def _key_part(part) -> int:
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    return int(part) & _MASK32


class RngStream:
    """Factory for independent generators keyed on (master_seed, key parts)."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def stream(self, *key_parts) -> np.random.Generator:
        """Return a fresh generator for the given key.

        Key parts may be non-negative ints (round index, client id) or strings
        (purpose tags such as "batches" or "participants").
        """
        spawn_key = tuple(_key_part(p) for p in key_parts)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=spawn_key)
        return np.random.default_rng(seq)
