"""Seeded counter-based random streams."""

from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an integer seed; generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent stream for work item ``index``, identical however work is split."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def seed_of(rng) -> int | None:
    """The integer seed a caller passed, if any (recorded as provenance)."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return None
