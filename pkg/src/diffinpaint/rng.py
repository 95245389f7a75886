"""Seed handling and independent random substreams.

Every stochastic entry point takes either an integer seed, a
``numpy.random.SeedSequence`` or a ``numpy.random.Generator``. Samplers split
their seed into named substreams so that, for example, RePaint inpainting with
an all-unknown mask consumes exactly the same generation noise as
unconditional sampling with the same seed.
"""
from __future__ import annotations

from typing import NamedTuple, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


class Substreams(NamedTuple):
    generation: np.random.Generator
    known: np.random.Generator


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        # derive a child sequence from the generator's own stream
        return np.random.SeedSequence(seed.integers(0, 2**63 - 1, size=4).tolist())
    return np.random.SeedSequence(seed)


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(as_seed_sequence(seed))


def substreams(seed: SeedLike) -> Substreams:
    """Split ``seed`` into the generation and known-image noising streams."""
    gen, known = as_seed_sequence(seed).spawn(2)
    return Substreams(np.random.default_rng(gen), np.random.default_rng(known))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed, e.g. one per dataset item."""
    lo, hi = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2)
    return int(lo) | (int(hi) & 0x7FFFFFFF) << 32
