"""Derived random streams.

Every consumer of randomness gets its own generator keyed by a tuple of
integers, so the draws seen by one client never depend on how many draws
another client made or in which order clients ran.
"""

from __future__ import annotations

import numpy as np

# stream tags, mixed into the seed sequence entropy
INIT = 1
COHORT = 2
CLIENT = 3
EXTRACT = 4
CAPACITY = 5
DATA = 6
PARTITION = 7
MONTE_CARLO = 8


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``(master_seed, *keys)``."""
    entropy = [int(master_seed) & 0xFFFFFFFF, *(int(k) & 0xFFFFFFFF for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
