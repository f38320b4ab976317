"""Seeded RNG streams.

One master seed plus an integer key path identifies every random draw in the
artifact. Streams are derived through numpy's SeedSequence spawn tree, so
trial i of cell j always sees the same bytes no matter how work is scheduled
across threads or runs. Numba kernels receive a (state, increment) pair for
a PCG32 generator derived from the same tree.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RNGStream:
    """Master seed plus stream key (an integer path in the spawn tree)."""

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "key", tuple(int(k) for k in self.key))

    def child(self, *path: int) -> "RNGStream":
        return RNGStream(self.seed, self.key + tuple(int(p) for p in path))

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=self.key)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.sequence())

    def kernel_state(self) -> tuple[np.uint64, np.uint64]:
        """(state, inc) pair for the PCG32 used inside numba kernels."""
        s = self.sequence().generate_state(2, dtype=np.uint64)
        return s[0], s[1] | np.uint64(1)


def kernel_state_array(stream: RNGStream, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial kernel states for batched kernels, trial i = child stream i."""
    states = np.empty(n, dtype=np.uint64)
    incs = np.empty(n, dtype=np.uint64)
    for i, child in enumerate(stream.sequence().spawn(n)):
        s = child.generate_state(2, dtype=np.uint64)
        states[i] = s[0]
        incs[i] = s[1] | np.uint64(1)
    return states, incs
