"""Bicubic (Keys, a=-0.5) resampling and the depth-dependent noise simulator.

Downsampling widens the kernel support by 1/scale (anti-aliasing), matching
the behaviour of the standard bicubic resize found in mainstream image tools.
Borders are handled by clamping source indices to the image.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .depthmap import DepthMap
from .errors import ShapeError, UsageError

_KEYS_A = -0.5


def keys_kernel(t: np.ndarray | float) -> np.ndarray:
    """The Keys piecewise-cubic interpolation kernel with a = -0.5."""
    a = _KEYS_A
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    tn = t[near]
    tf = t[far]
    out[near] = (a + 2) * tn**3 - (a + 3) * tn**2 + 1
    out[far] = a * tf**3 - 5 * a * tf**2 + 8 * a * tf - 4 * a
    return out


def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) row-stochastic resampling matrix for one axis.

    Half-pixel-centred mapping; for downscaling the kernel is stretched by
    1/scale. Out-of-range taps are clamped to the edge samples.
    """
    scale = n_out / n_in
    fscale = min(scale, 1.0)
    radius = 2.0 / fscale
    mat = np.zeros((n_out, n_in))
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    for o, c in enumerate(centers):
        lo = int(np.ceil(c - radius))
        hi = int(np.floor(c + radius))
        taps = np.arange(lo, hi + 1)
        w = keys_kernel((c - taps) * fscale)
        np.add.at(mat[o], np.clip(taps, 0, n_in - 1), w)
        mat[o] /= mat[o].sum()
    return mat


def resize_array(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize of a 2-D array to an explicit output size."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected 2-D array, got shape {values.shape}")
    if out_h < 1 or out_w < 1:
        raise UsageError(f"degenerate output size {out_h}x{out_w}")
    h, w = values.shape
    out = values
    if out_h != h:
        out = _axis_weights(h, out_h) @ out
    if out_w != w:
        out = out @ _axis_weights(w, out_w).T
    return out


def bicubic_resize(dm: DepthMap, scale) -> DepthMap:
    """Resize a depth map by a positive rational (or float) scale factor."""
    s = Fraction(scale).limit_denominator(10**6) if not isinstance(scale, Fraction) else scale
    if s <= 0:
        raise UsageError(f"scale must be positive, got {scale}")
    out_h = int(round(dm.height * s))
    out_w = int(round(dm.width * s))
    return dm.with_values(resize_array(dm.values, out_h, out_w))


def make_supervision_pyramid(gt: DepthMap, stage_factors: list[int]) -> list[DepthMap]:
    """Per-stage supervision targets, coarsest first, ending with gt itself.

    Target k is the ground truth repeatedly bicubic-downsampled by the stage
    factors above stage k; the network-input resolution is never a target.
    """
    total = int(np.prod(stage_factors))
    if gt.height % total != 0 or gt.width % total != 0:
        raise ShapeError(f"gt size {gt.height}x{gt.width} not divisible by total factor {total}")
    pyramid = [gt]
    for rho in reversed(stage_factors[1:]):
        pyramid.append(bicubic_resize(pyramid[-1], Fraction(1, rho)))
    return pyramid[::-1]


@dataclass
class NoiseSpec:
    """Depth-dependent Gaussian noise: per-pixel std delta / depth."""

    delta: float = 651.0
    seed: int = 0

    def __post_init__(self):
        if self.delta <= 0:
            raise UsageError(f"noise delta must be positive, got {self.delta}")


def add_depth_noise(dm: DepthMap, spec: NoiseSpec) -> DepthMap:
    """Add N(0, (delta/d)^2) noise per pixel; non-positive depths are left unchanged."""
    d = dm.values
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(d.shape)
    valid = d > 0
    out = d.copy()
    out[valid] += noise[valid] * (spec.delta / d[valid])
    return dm.with_values(out)
