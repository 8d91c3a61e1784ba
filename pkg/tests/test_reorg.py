"""Sub-pixel view decomposition and its exact inverse."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthsr.errors import ShapeError, UsageError
from depthsr.reorg import decompose, reorganize


def test_views_are_strided_slices():
    hr = np.arange(36, dtype=np.float64).reshape(6, 6)
    grid = decompose(hr, 3)
    assert grid.views.shape == (3, 3, 2, 2)
    np.testing.assert_array_equal(grid.view(1, 1), hr[0::3, 0::3])
    np.testing.assert_array_equal(grid.view(2, 3), hr[1::3, 2::3])


def test_reorganize_is_exact_inverse():
    rng = np.random.default_rng(0)
    hr = rng.normal(size=(12, 8))
    for r in (2, 4):
        back = reorganize(decompose(hr, r))
        assert np.array_equal(back, hr)  # bitwise


@settings(max_examples=60, deadline=None)
@given(
    r=st.integers(min_value=2, max_value=6),
    mh=st.integers(min_value=1, max_value=5),
    mw=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_bijection_property(r, mh, mw, seed):
    rng = np.random.default_rng(seed)
    hr = rng.normal(size=(r * mh, r * mw))
    grid = decompose(hr, r)
    assert np.array_equal(reorganize(grid), hr)
    # every HR sample appears in exactly one view
    total = sum(grid.view(i + 1, j + 1).size for i in range(r) for j in range(r))
    assert total == hr.size


def test_rejects_non_divisible_shapes():
    with pytest.raises(ShapeError):
        decompose(np.zeros((7, 8)), 2)
    with pytest.raises(ShapeError):
        decompose(np.zeros((8, 7)), 2)


def test_rejects_bad_factor_and_indices():
    with pytest.raises(ShapeError):
        decompose(np.zeros((8, 8)), 0)
    grid = decompose(np.zeros((8, 8)), 2)
    with pytest.raises(UsageError):
        grid.view(0, 1)  # view indices are 1-based
    with pytest.raises(UsageError):
        grid.view(1, 3)
