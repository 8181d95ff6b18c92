"""Named RNG substreams derived from a single master seed.

Every source of randomness in a run (splitting, weight init, augmentation,
epoch shuffling) draws from its own substream so each component can be
reproduced in isolation from the one top-level seed.
"""

import hashlib

import numpy as np


def substream_seed(master_seed: int, name: str) -> int:
    """Derive a 64-bit seed for the named substream."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, name: str) -> np.random.Generator:
    """A fresh generator for the named substream of ``master_seed``."""
    return np.random.default_rng(substream_seed(master_seed, name))
