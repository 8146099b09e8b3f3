"""Reproducible random substreams.

Every stochastic step of a study draws from its own counter-based Philox
stream, addressed by a path such as ``(sample, role)`` below a root seed.
Two streams with the same (seed, path) produce identical draws regardless
of which thread asks for them or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAUSSIAN_METHOD = "numpy Generator.standard_normal (ziggurat) over Philox4x64"

SEED_MAX = 2**64 - 1


@dataclass(frozen=True)
class RngStream:
    """Address of one random substream: a root seed plus a path of indices."""

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= SEED_MAX:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        if any(i < 0 for i in self.path):
            raise ValueError(
                f"Substream path indices must be non-negative, got {self.path}"
            )
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    def child(self, *indices: int) -> RngStream:
        """Substream one or more levels below this one."""
        return RngStream(self.seed, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this substream."""
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


# Roles used as the last path index inside one Monte Carlo sample.
ROLE_DATA = 0
ROLE_BOOTSTRAP = 1
ROLE_VOLUME = 2
ROLE_MEAN = 3
