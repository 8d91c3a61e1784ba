"""Finite-difference verification of every analytic gradient path.

Each check builds a scalar loss, computes its analytic gradient through the
manual backward passes, and compares against central differences. Used by the
test suite and by the `depthsr gradcheck` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (CascadeModel, DcnnUnit, DcnnUnitConfig, NvsStage,
                      cascade_backward, cascade_forward, deep_supervised_loss)
from .tensor import ConvLayer, conv2d_backward, conv2d_forward, mse_loss

DEFAULT_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    seed: int
    rel_error: float
    passed: bool


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / denom)


def numerical_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f with respect to array x (in place)."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_conv_layer(seed: int, has_relu: bool, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    layer = ConvLayer.create(2, 3, 3, has_relu, rng)
    # keep pre-activations away from the ReLU kink so FD is valid
    layer.bias[...] = rng.normal(0.5, 0.1, size=layer.bias.shape)
    x = rng.normal(size=(1, 2, 4, 4))
    target = rng.normal(size=(1, 3, 4, 4))

    def loss():
        out = conv2d_forward(x, layer)
        return mse_loss(out, target)[0]

    out = conv2d_forward(x, layer)
    _, grad_out = mse_loss(out, target)
    gx, gw, gb = conv2d_backward(layer, grad_out)
    tag = "conv+relu" if has_relu else "conv"
    results = []
    for name, analytic, arr in (("input", gx, x), ("weights", gw, layer.weights),
                                ("bias", gb, layer.bias)):
        err = _rel_error(analytic, numerical_grad(loss, arr))
        results.append(CheckResult(f"{tag}/{name}", seed, err, err < tol))
    return results


def check_mse(seed: int, tol: float = 1e-8) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    pred = rng.normal(size=(1, 1, 3, 3))
    target = rng.normal(size=(1, 1, 3, 3))
    _, grad = mse_loss(pred, target)
    numeric = numerical_grad(lambda: mse_loss(pred, target)[0], pred)
    err = _rel_error(grad, numeric)
    return [CheckResult("mse/pred", seed, err, err < tol)]


def check_unit(seed: int, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cfg = DcnnUnitConfig(num_layers=2, channels=4, kernel=3, residual=True)
    unit = DcnnUnit.create(cfg, rng)
    x = rng.normal(size=(1, 1, 4, 4))
    target = rng.normal(size=(1, 1, 4, 4))

    def loss():
        return mse_loss(unit.forward(x), target)[0]

    _, grad_out = mse_loss(unit.forward(x), target)
    gx, grads = unit.backward(grad_out)
    results = []
    err = _rel_error(gx, numerical_grad(loss, x))
    results.append(CheckResult("unit/input", seed, err, err < tol))
    for pi, (p, g) in enumerate(zip(unit.parameters(), grads)):
        err = _rel_error(g, numerical_grad(loss, p))
        results.append(CheckResult(f"unit/param{pi}", seed, err, err < tol))
    return results


def check_stage(seed: int, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cfg = DcnnUnitConfig(num_layers=2, channels=3, kernel=3, residual=True)
    stage = NvsStage.create(2, cfg, rng)
    x = rng.normal(size=(1, 1, 3, 3))
    target = rng.normal(size=(1, 1, 6, 6))

    def loss():
        return mse_loss(stage.forward(x), target)[0]

    _, grad_out = mse_loss(stage.forward(x), target)
    gx, grads = stage.backward(grad_out)
    results = []
    err = _rel_error(gx, numerical_grad(loss, x))
    results.append(CheckResult("stage/input", seed, err, err < tol))
    # spot-check one parameter per unit to keep runtime down
    params = stage.parameters()
    for pi in range(0, len(params), 2):
        err = _rel_error(grads[pi], numerical_grad(loss, params[pi]))
        results.append(CheckResult(f"stage/param{pi}", seed, err, err < tol))
    return results


def check_cascade(seed: int, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    """Two-stage deep-supervised toy cascade, verifying cross-stage backprop."""
    rng = np.random.default_rng(seed)
    cfg = DcnnUnitConfig(num_layers=2, channels=2, kernel=3, residual=True)
    model = CascadeModel(stages=[NvsStage.create(2, cfg, rng) for _ in range(2)])
    x = rng.normal(size=(1, 1, 2, 2))
    targets = [rng.normal(size=(1, 1, 4, 4)), rng.normal(size=(1, 1, 8, 8))]

    def loss():
        outs = cascade_forward(x, model)
        return deep_supervised_loss(outs, targets)[0]

    outs = cascade_forward(x, model)
    _, sup_grads = deep_supervised_loss(outs, targets)
    grads = cascade_backward(model, sup_grads)
    params = model.cascade_parameters()
    results = []
    # first-stage weights carry the cross-stage gradient path
    for pi in (0, 1, 2, len(params) - 2, len(params) - 1):
        err = _rel_error(grads[pi], numerical_grad(loss, params[pi]))
        results.append(CheckResult(f"cascade/param{pi}", seed, err, err < tol))
    return results


def run_all(num_seeds: int = 20, base_seed: int = 0, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    results: list[CheckResult] = []
    for s in range(base_seed, base_seed + num_seeds):
        results.extend(check_conv_layer(s, has_relu=True, tol=tol))
        results.extend(check_conv_layer(s, has_relu=False, tol=tol))
        results.extend(check_mse(s))
        results.extend(check_unit(s, tol=tol))
        results.extend(check_stage(s, tol=tol))
        results.extend(check_cascade(s, tol=tol))
    return results
