"""Seed derivation so every (tree, iteration, row) owns an independent stream."""

from __future__ import annotations

import numpy as np


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator keyed by ``seed`` and any number of integer keys.

    Streams for distinct key tuples are statistically independent, and the
    result does not depend on the order in which streams are requested.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a plain integer seed (for handing to code that wants an int)."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
