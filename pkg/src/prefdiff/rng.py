"""Seedable counter-based random streams.

All stochastic code in the package draws from Philox generators keyed by
explicit integer tuples, so any stream (per run, per user, per purpose) can
be reconstructed independently of execution order.
"""
from __future__ import annotations

import numpy as np


def make_rng(*keys: int) -> np.random.Generator:
    """A Philox generator deterministically derived from the key tuple."""
    key = np.random.SeedSequence(list(keys)).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
