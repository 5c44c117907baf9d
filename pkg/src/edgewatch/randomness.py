"""Seeded random streams with cheap buffered uniform draws."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator derived from a root seed and a spawn key."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


class UniformSource:
    """Buffered uniform(0, 1) draws from a numpy generator.

    Refilling in blocks keeps per-draw overhead out of the sampling loop
    while preserving the generator's deterministic stream order.
    """

    __slots__ = ("_rng", "_buffer", "_pos", "_block")

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._buffer = rng.random(block)
        self._pos = 0

    def next(self) -> float:
        pos = self._pos
        if pos == self._block:
            self._buffer = self._rng.random(self._block)
            pos = 0
        self._pos = pos + 1
        return self._buffer[pos]
