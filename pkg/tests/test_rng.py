"""Tests for addressed random substreams."""

import math

import numpy as np
import pytest

from spdwave.rng import SEED_MAX, RngStream


def test_same_address_same_draws():
    a = RngStream(123, (4, 1)).generator().standard_normal(50)
    b = RngStream(123).child(4).child(1).generator().standard_normal(50)
    np.testing.assert_array_equal(a, b)


def test_distinct_paths_differ():
    a = RngStream(123, (4, 1)).generator().standard_normal(50)
    b = RngStream(123, (4, 2)).generator().standard_normal(50)
    c = RngStream(124, (4, 1)).generator().standard_normal(50)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_streams_look_independent():
    n = 20_000
    a = RngStream(9, (0,)).generator().standard_normal(n)
    b = RngStream(9, (1,)).generator().standard_normal(n)
    assert abs(np.corrcoef(a, b)[0, 1]) < 5 / math.sqrt(n)
    assert abs(a.mean()) < 5 / math.sqrt(n)


def test_seed_and_path_validation():
    RngStream(SEED_MAX)
    with pytest.raises(ValueError):
        RngStream(SEED_MAX + 1)
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(1, (-2,))
