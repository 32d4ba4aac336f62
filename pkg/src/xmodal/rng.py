"""Counter-based deterministic randomness.

Every random draw in the package comes from a Philox stream keyed by a
root seed plus a path of string/int tokens naming the entity being
generated. Streams are independent, so any single row of any generated
artifact can be reproduced in isolation and generation could parallelize
without changing a bit of output.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *parts) -> int:
    """128-bit Philox key derived from the seed and an entity path."""
    path = "/".join([str(int(seed))] + [str(p) for p in parts])
    digest = hashlib.blake2b(path.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def rng_for(seed: int, *parts) -> np.random.Generator:
    """Independent generator for the entity named by ``parts``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *parts)))
