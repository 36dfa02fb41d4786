"""Reproducible random streams.

Every stochastic step draws from a generator keyed by the run's root seed
plus a tuple of non-negative integers (a counter path such as
``(voltage_index, vendor_index)`` or ``(epoch,)``). Keys map onto numpy's
``SeedSequence`` spawn keys, so streams are independent and any single point
of a sweep can be re-run in isolation.
"""
from __future__ import annotations

import numpy as np


def child_seed_sequence(root: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(k) for k in keys))


def child_rng(root: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(child_seed_sequence(root, *keys))


def child_int_seed(root: int, *keys: int) -> int:
    """A 32-bit integer seed, for consumers that cannot take a Generator."""
    return int(child_seed_sequence(root, *keys).generate_state(1)[0])


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
