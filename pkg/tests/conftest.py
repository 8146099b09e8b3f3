"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from spdwave.rng import RngStream


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return RngStream(20240601).generator()


def random_sym(
    rng: np.random.Generator, d: int, scale: float = 1.0, n: int | None = None
) -> np.ndarray:
    """Symmetric matrices with entries uniform in [-scale, scale]."""
    shape = (d, d) if n is None else (n, d, d)
    a = rng.uniform(-scale, scale, size=shape)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def sym_factory(rng):
    """Factory for random symmetric matrices (log-domain points)."""
    return lambda d, scale=1.0, n=None: random_sym(rng, d, scale, n)


@pytest.fixture
def orthogonal_factory(rng):
    return lambda d: random_orthogonal(rng, d)
