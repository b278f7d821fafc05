"""Deterministic random streams.

Every random draw in the toolkit comes from numpy's PCG64 generator, seeded
through ``SeedSequence``. PCG64 output is specified bit-for-bit by numpy, so a
given seed yields the same stream on every platform.
"""
from __future__ import annotations

import numpy as np

Rng = np.random.Generator


def make_rng(*keys: int) -> Rng:
    """Return a PCG64 generator seeded from one or more non-negative ints.

    ``make_rng(seed, epoch, index)`` gives an independent stream per
    (seed, epoch, index) triple, which is how per-sample streams are derived.
    """
    if not keys:
        raise ValueError("make_rng needs at least one seed key")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def derive_seed(*keys: int) -> int:
    """A 32-bit seed derived from several keys, e.g. ``(train_seed, epoch)``."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])
