"""Deterministic random-stream derivation.

All randomness in an experiment flows from one integer seed.  Substreams
are derived with named integer paths so that replaying a run (or a single
path-planning leg) reproduces the exact bit stream:

    measurement noise   -> rng_stream(seed, NOISE)
    RRT* leg k          -> rng_stream(seed, RRT_LEG, k)

The generator is Philox (counter-based), so streams with distinct paths
are statistically independent and replay identically on any platform.
"""

from __future__ import annotations

import numpy as np

NOISE = 0
RRT_LEG = 1


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by ``(seed, *path)``."""
    ss = np.random.SeedSequence(entropy=[int(seed), *[int(p) for p in path]])
    return np.random.Generator(np.random.Philox(ss))
