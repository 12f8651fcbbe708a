"""Counter-based, keyed random noise.

Every noise draw is keyed by (seed, purpose, step, prompt) through a Philox
counter-based generator, so draws are independent of execution order and
worker count.
"""

from __future__ import annotations

import numpy as np

# purpose keys
INIT = 0
ROLLOUT = 1
TRANSFORM = 2


def generator(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def noise_field(shape, seed: int, *key: int) -> np.ndarray:
    """A standard-normal float32 field, fully determined by (seed, key)."""
    return generator(seed, *key).standard_normal(shape, dtype=np.float32)


def random_permutation(n: int, seed: int, *key: int) -> np.ndarray:
    return generator(seed, *key).permutation(n).astype(np.int64)
