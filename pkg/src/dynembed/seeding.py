"""Deterministic RNG derivation.

Every random draw in the package flows through child_rng so that a run is
a pure function of (seed, purpose tags). String tags are hashed with crc32;
integer tags pass through, so (seed, "batch", epoch, tau) and the like give
independent, reproducible streams.
"""

from __future__ import annotations

import zlib

import numpy as np


def child_rng(seed: int, *tags) -> np.random.Generator:
    entropy = [int(seed)]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(zlib.crc32(tag.encode("utf-8")))
        else:
            entropy.append(int(tag))
    return np.random.default_rng(np.random.SeedSequence(entropy))
