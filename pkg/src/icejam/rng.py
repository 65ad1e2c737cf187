"""Keyed random substreams.

Every stochastic draw in the package comes from a Philox (counter-based)
generator whose key is hashed from the master seed and a tuple of integers
naming the draw, e.g. ``(BOOTSTRAP, b)``.  The stream for a given key does not
depend on which other keys were used or in what order, so work can be split
across processes without changing any result.
"""

import numpy as np

BOOTSTRAP = 1
SAMPLE_MODELS = 2
SIMULATE = 3

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
