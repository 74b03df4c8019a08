"""Seeded random stream: same seed, bit-identical draws."""

from __future__ import annotations

import numpy as np


class Rng:
    """Thin wrapper over numpy's PCG64 generator with explicit seeding."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def draw_normal(self, shape=()) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def draw_uniform(self, shape=()) -> np.ndarray:
        return self._gen.random(shape)

    def draw_integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def spawn(self, n: int) -> list["Rng"]:
        """Derive n independent child streams deterministically."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        out = []
        for c in children:
            r = object.__new__(Rng)
            r.seed = None
            r._gen = np.random.Generator(np.random.PCG64(c))
            out.append(r)
        return out


def rng(seed: int) -> Rng:
    return Rng(seed)
