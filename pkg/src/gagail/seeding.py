"""Deterministic seed derivation.

All randomness flows from one master seed through named integer paths, so
any component can be re-created in isolation and whole runs replay
byte-for-byte. Paths are plain tuples of non-negative ints.
"""

from __future__ import annotations

import numpy as np


def seed_for(master: int, *path: int) -> int:
    """A child seed derived from (master, *path)."""
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


def rng_for(master: int, *path: int) -> np.random.Generator:
    """A fresh generator seeded from (master, *path)."""
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, path)]))
