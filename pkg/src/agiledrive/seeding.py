"""Deterministic named random streams.

Every stochastic consumer in the stack (planner sampling, reset
jitter, agent init, learner perturbations) pulls from its own named
substream of a single root seed.  Streams are independent of creation
order, so adding a consumer never perturbs the draws of another.
"""
from __future__ import annotations

import zlib

import numpy as np


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Generator for ``name`` derived from ``root_seed``."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), tag]))


def spawn_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 31-bit seed, e.g. for learner perturbations."""
    return int(rng.integers(0, 2**31 - 1))
