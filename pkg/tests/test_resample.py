"""Bicubic resampling, supervision pyramids, depth-dependent noise."""

import numpy as np
import pytest

from depthsr.depthmap import DepthMap
from depthsr.errors import UsageError
from depthsr.resample import (
    NoiseSpec,
    add_depth_noise,
    bicubic_resize,
    keys_kernel,
    make_supervision_pyramid,
    resize_array,
)


def test_keys_kernel_interpolation_conditions():
    # cubic-convolution kernel with a = -0.5: 1 at 0, 0 at every other integer
    assert keys_kernel(0.0) == 1.0
    assert keys_kernel(1.0) == 0.0
    assert keys_kernel(2.0) == 0.0
    assert keys_kernel(2.5) == 0.0
    assert keys_kernel(-1.0) == 0.0
    # symmetric
    assert keys_kernel(0.4) == keys_kernel(-0.4)


def test_identity_at_same_size():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(9, 7))
    np.testing.assert_array_equal(resize_array(x, 9, 7), x)


def test_constant_maps_are_preserved():
    x = np.full((16, 16), 42.5)
    for shape in [(8, 8), (32, 32), (11, 23)]:
        out = resize_array(x, *shape)
        np.testing.assert_allclose(out, 42.5, rtol=0, atol=1e-12)


def test_linear_ramp_preserved_in_interior():
    # cubic convolution reproduces degree-1 polynomials away from borders
    x = np.outer(np.arange(16, dtype=np.float64), np.ones(16))
    up = resize_array(x, 32, 32)
    centers = (np.arange(32) + 0.5) / 2.0 - 0.5  # half-pixel source coordinates
    interior = slice(4, 28)
    np.testing.assert_allclose(
        up[interior, 16], centers[interior], rtol=0, atol=1e-10)


def test_downsample_then_size_matches():
    dm = DepthMap(np.random.default_rng(1).uniform(10, 255, size=(64, 64)))
    lr = bicubic_resize(dm, 0.5)
    assert lr.values.shape == (32, 32)
    hr = bicubic_resize(lr, 4)
    assert hr.values.shape == (128, 128)


def test_antialiased_downsample_averages_locally():
    # alternating stripes downsampled 2x should land near the mean, not on
    # either extreme, because the kernel is stretched for decimation
    x = np.tile(np.array([[0.0], [100.0]]), (8, 16))
    lr = resize_array(x, 8, 16)
    assert np.all(lr > 20) and np.all(lr < 80)


def test_supervision_pyramid_shapes_and_order():
    gt = DepthMap(np.random.default_rng(2).uniform(10, 255, size=(64, 64)))
    pyr = make_supervision_pyramid(gt, [2, 2, 2])
    assert [p.values.shape for p in pyr] == [(16, 16), (32, 32), (64, 64)]
    # finest level is the ground truth itself
    np.testing.assert_array_equal(pyr[-1].values, gt.values)


def test_supervision_pyramid_single_stage():
    gt = DepthMap(np.ones((32, 32)))
    pyr = make_supervision_pyramid(gt, [2])
    assert len(pyr) == 1
    np.testing.assert_array_equal(pyr[0].values, gt.values)


def test_noise_statistics_follow_inverse_depth():
    d = 100.0
    dm = DepthMap(np.full((200, 200), d))
    noisy = add_depth_noise(dm, NoiseSpec(delta=651.0, seed=3))
    resid = noisy.values - d
    assert abs(resid.mean()) < 0.1
    assert resid.std() == pytest.approx(651.0 / d, rel=0.02)


def test_noise_skips_nonpositive_depths():
    vals = np.array([[0.0, -5.0], [50.0, 50.0]])
    noisy = add_depth_noise(DepthMap(vals), NoiseSpec(seed=0))
    assert noisy.values[0, 0] == 0.0
    assert noisy.values[0, 1] == -5.0
    assert noisy.values[1, 0] != 50.0


def test_noise_is_seed_deterministic():
    dm = DepthMap(np.full((8, 8), 80.0))
    a = add_depth_noise(dm, NoiseSpec(seed=7)).values
    b = add_depth_noise(dm, NoiseSpec(seed=7)).values
    c = add_depth_noise(dm, NoiseSpec(seed=8)).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_resize_rejects_bad_sizes():
    with pytest.raises(UsageError):
        resize_array(np.zeros((4, 4)), 0, 4)
