"""Minimal dense tensor engine: same-padding conv layers with manual backprop.

Tensors are plain numpy arrays in (batch, channels, height, width) layout,
float64 by default (float32 selectable per layer for speed runs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError, UsageError


def require_nchw(x: np.ndarray, name: str = "tensor") -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (batch, channels, height, width), got shape {x.shape}")


def require_finite(x: np.ndarray, context: str = "") -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values encountered {context}".strip())


@dataclass
class ConvLayer:
    """Stride-1, same-padding 2-D convolution (cross-correlation) with optional ReLU.

    Kernel size is restricted to {3, 5}; padding is k // 2 so spatial size is
    preserved. The forward pass caches the input and pre-activation needed by
    ``conv2d_backward``.
    """

    weights: np.ndarray  # (out_ch, in_ch, k, k)
    bias: np.ndarray  # (out_ch,)
    has_relu: bool = True

    # caches populated by conv2d_forward, consumed by conv2d_backward
    _cached_input: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cached_preact: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv weights must be (out_ch, in_ch, k, k), got {w.shape}")
        if w.shape[2] not in (3, 5):
            raise ShapeError(f"kernel size must be 3 or 5, got {w.shape[2]}")
        b = np.asarray(self.bias)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match out_ch {w.shape[0]}")
        self.weights = w
        self.bias = b

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]

    @property
    def padding(self) -> int:
        return self.kernel // 2

    @classmethod
    def create(cls, in_ch: int, out_ch: int, kernel: int, has_relu: bool,
               rng: np.random.Generator, dtype=np.float64) -> "ConvLayer":
        # He init: zero-mean Gaussian, std sqrt(2 / fan_in), zero bias
        std = np.sqrt(2.0 / (kernel * kernel * in_ch))
        w = rng.normal(0.0, std, size=(out_ch, in_ch, kernel, kernel)).astype(dtype)
        b = np.zeros(out_ch, dtype=dtype)
        return cls(weights=w, bias=b, has_relu=has_relu)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad by k//2 and return patches of shape (B, H*W, C*k*k)."""
    p = k // 2
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # win: (B, C, H, W, k, k) -> (B, H*W, C*k*k)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h * w, c * k * k)


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Same-padding correlation plus bias, then ReLU if the layer has one."""
    require_nchw(x, "conv input")
    if x.shape[1] != layer.in_ch:
        raise ShapeError(f"input has {x.shape[1]} channels, layer expects {layer.in_ch}")
    b, _, h, w = x.shape
    k = layer.kernel
    cols = _im2col(x, k)  # (B, H*W, C*k*k)
    wmat = layer.weights.reshape(layer.out_ch, -1)
    out = cols @ wmat.T  # (B, H*W, out_ch)
    out = out.transpose(0, 2, 1).reshape(b, layer.out_ch, h, w)
    out += layer.bias[None, :, None, None]
    layer._cached_input = x
    layer._cached_preact = out
    if layer.has_relu:
        out = np.maximum(out, 0.0)
    require_finite(out, "in conv2d_forward output")
    return out


def conv2d_backward(layer: ConvLayer, grad_out: np.ndarray):
    """Backprop through the layer's most recent forward pass.

    Returns (grad_input, grad_weights, grad_bias). The ReLU mask comes from
    the cached pre-activation.
    """
    if layer._cached_input is None or layer._cached_preact is None:
        raise UsageError("conv2d_backward called without a cached forward pass")
    x = layer._cached_input
    b, c, h, w = x.shape
    if grad_out.shape != (b, layer.out_ch, h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output "
                         f"{(b, layer.out_ch, h, w)}")
    if layer.has_relu:
        grad_out = grad_out * (layer._cached_preact > 0)

    k = layer.kernel
    cols = _im2col(x, k)  # (B, H*W, C*k*k)
    go = grad_out.reshape(b, layer.out_ch, h * w)
    # grad wrt weights: sum over batch and spatial positions
    gw = np.einsum("bop,bpc->oc", go, cols, optimize=True).reshape(layer.weights.shape)
    gb = grad_out.sum(axis=(0, 2, 3))
    # grad wrt input: correlate grad_out with spatially flipped, transposed weights
    wflip = layer.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (in_ch, out_ch, k, k)
    gcols = _im2col(grad_out, k)  # (B, H*W, out_ch*k*k)
    gx = gcols @ wflip.reshape(c, -1).T  # (B, H*W, in_ch)
    gx = gx.transpose(0, 2, 1).reshape(b, c, h, w)
    return gx, gw, gb


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient with respect to pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    loss = float(np.sum(diff * diff) / n)
    grad = 2.0 * diff / n
    return loss, grad


def clip_gradients(grads: list[np.ndarray], threshold: float, learning_rate: float) -> list[np.ndarray]:
    """Adjustable gradient clipping: element clamp at +-threshold/learning_rate."""
    if threshold <= 0:
        raise UsageError(f"clip threshold must be positive, got {threshold}")
    bound = threshold / learning_rate
    return [np.clip(g, -bound, bound) for g in grads]


@dataclass
class OptimizerState:
    """SGD-with-momentum state: one velocity buffer per parameter tensor."""

    learning_rate: float
    momentum: float = 0.9
    clip_threshold: float = 0.1
    velocities: list[np.ndarray] | None = None

    def _ensure_buffers(self, params: list[np.ndarray]) -> None:
        if self.velocities is None:
            self.velocities = [np.zeros_like(p) for p in params]
        if len(self.velocities) != len(params):
            raise ShapeError("optimizer state does not match parameter list")


def sgd_momentum_step(params: list[np.ndarray], grads: list[np.ndarray],
                      state: OptimizerState) -> list[np.ndarray]:
    """In-place momentum update: v <- m*v - lr*g; p <- p + v (g pre-clipped)."""
    if len(params) != len(grads):
        raise ShapeError("params and grads length mismatch")
    state._ensure_buffers(params)
    grads = clip_gradients(grads, state.clip_threshold, state.learning_rate)
    for p, g, v in zip(params, grads, state.velocities):
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} vs grad shape {g.shape}")
        v *= state.momentum
        v -= state.learning_rate * g
        p += v
    return params
