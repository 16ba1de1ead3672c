"""Seeded, splittable random streams.

Every experiment draws from ``substream(seed, stream, index)``: a Philox
counter-based generator keyed by the full tuple, so trial ``i`` sees the same
numbers whether it runs first, last, or in another process.
"""

import numpy as np

# Named substreams. Values are part of the reproducibility contract.
PARAMS = 1
ROUNDING = 2
DATA = 3
MODEL = 4
ERRORS = 5


def substream(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def key64(seed: int, *keys: int) -> int:
    """A 64-bit key for the numba-side counter hash (see ``bounds``)."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])
