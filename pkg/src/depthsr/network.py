"""The super-resolution architecture.

A stage holds r*r small residual conv units (one per sub-pixel phase); their
outputs are interleaved into an upsampled map. Stages cascade, each supervised
against a matching-resolution downsampled ground truth. An optional fusion
unit consumes all stage outputs upsampled to final resolution and predicts a
correction added to the last stage's output.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import reorg
from .depthmap import DepthMap
from .errors import DataError, NumericalError, ShapeError, UsageError
from .resample import resize_array
from .tensor import (ConvLayer, OptimizerState, conv2d_backward, conv2d_forward,
                     mse_loss, sgd_momentum_step)

MODEL_MAGIC = b"DSRF"
MODEL_FORMAT_VERSION = 1


def plan_stage_factors(total_factor: int) -> list[int]:
    """Per-stage upsampling factors for a requested total factor, smallest first."""
    plans = {2: [2], 3: [3], 4: [2, 2], 5: [5], 6: [2, 3],
             8: [2, 2, 2], 16: [2, 2, 2, 2]}
    if total_factor not in plans:
        raise UsageError(f"unsupported total factor {total_factor} (supported: {sorted(plans)})")
    return plans[total_factor]


@dataclass
class DcnnUnitConfig:
    num_layers: int = 10
    channels: int = 64
    kernel: int = 3  # 3 for sub-task units, 5 for the fusion unit
    residual: bool = True
    in_channels: int = 1
    # He init on the output layer produces residuals far larger than the
    # corrections a residual unit must learn; the resulting transient drives
    # hidden ReLUs into the dead regime.  Shrinking the output layer's init
    # keeps the unit near its identity starting point without zeroing
    # gradients outright.
    output_init_scale: float = 0.01

    def __post_init__(self):
        if self.num_layers < 2:
            raise UsageError(f"a unit needs at least 2 layers, got {self.num_layers}")
        if self.kernel not in (3, 5):
            raise UsageError(f"kernel must be 3 or 5, got {self.kernel}")


class DcnnUnit:
    """Stack of same-size conv+ReLU layers ending in a linear conv to 1 channel.

    With residual on, the first input channel is added to the output (the
    output is a signed correction of the input map).
    """

    def __init__(self, config: DcnnUnitConfig, layers: list[ConvLayer]):
        self.config = config
        self.layers = layers
        self._cached_input: np.ndarray | None = None

    @classmethod
    def create(cls, config: DcnnUnitConfig, rng: np.random.Generator,
               dtype=np.float64) -> "DcnnUnit":
        layers = []
        for i in range(config.num_layers):
            in_ch = config.in_channels if i == 0 else config.channels
            out_ch = 1 if i == config.num_layers - 1 else config.channels
            # last layer linear: residuals are signed
            relu = i < config.num_layers - 1
            layer = ConvLayer.create(in_ch, out_ch, config.kernel, relu, rng, dtype)
            if i == config.num_layers - 1:
                layer.weights *= config.output_init_scale
            layers.append(layer)
        return cls(config, layers)

    def zero_weights(self) -> None:
        for layer in self.layers:
            layer.weights[...] = 0.0
            layer.bias[...] = 0.0

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(f"unit expects {self.config.in_channels} input channels, got {x.shape[1]}")
        self._cached_input = x
        out = x
        for layer in self.layers:
            out = conv2d_forward(out, layer)
        if self.config.residual:
            out = out + x[:, :1]
        return out

    def backward(self, grad_out: np.ndarray):
        """Returns (grad_input, grads aligned with parameters())."""
        if self._cached_input is None:
            raise UsageError("backward called before forward")
        grads: list[np.ndarray] = []
        g = grad_out
        for layer in reversed(self.layers):
            g, gw, gb = conv2d_backward(layer, g)
            grads.append(gb)
            grads.append(gw)
        grads.reverse()
        if self.config.residual:
            g = g.copy()
            g[:, 0] += grad_out[:, 0]
        return g, grads


def dcnn_unit_forward(x: np.ndarray, unit: DcnnUnit) -> np.ndarray:
    return unit.forward(x)


class NvsStage:
    """One upsampling stage: r*r phase units plus the interleaving step."""

    def __init__(self, factor: int, units: list[DcnnUnit]):
        if len(units) != factor * factor:
            raise ShapeError(f"stage with factor {factor} needs {factor**2} units, got {len(units)}")
        self.factor = factor
        self.units = units

    @classmethod
    def create(cls, factor: int, config: DcnnUnitConfig, rng: np.random.Generator,
               dtype=np.float64) -> "NvsStage":
        return cls(factor, [DcnnUnit.create(config, rng, dtype) for _ in range(factor * factor)])

    def parameters(self) -> list[np.ndarray]:
        out = []
        for u in self.units:
            out.extend(u.parameters())
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(B, 1, H, W) -> (B, 1, rH, rW) by running all phase units and interleaving."""
        r = self.factor
        b, _, h, w = x.shape
        out = np.empty((b, 1, r * h, r * w), dtype=x.dtype)
        for idx, unit in enumerate(self.units):
            a, c = divmod(idx, r)
            out[:, :, a::r, c::r] = unit.forward(x)
        return out

    def backward(self, grad_out: np.ndarray):
        """Returns (grad wrt stage input, grads aligned with parameters())."""
        r = self.factor
        grad_in = None
        grads: list[np.ndarray] = []
        for idx, unit in enumerate(self.units):
            a, c = divmod(idx, r)
            g_in, g = unit.backward(np.ascontiguousarray(grad_out[:, :, a::r, c::r]))
            grads.extend(g)
            grad_in = g_in if grad_in is None else grad_in + g_in
        return grad_in, grads


def nvs_stage_forward(lr: np.ndarray, stage: NvsStage):
    """Convenience wrapper: returns (hr map, the r*r phase views as a ViewGrid)."""
    x = np.asarray(lr, dtype=np.float64)[None, None]
    hr = stage.forward(x)[0, 0]
    return hr, reorg.decompose(hr, stage.factor)


@dataclass
class CascadeModel:
    stages: list[NvsStage]
    msf_unit: DcnnUnit | None = None
    # depth values are divided by this before entering the network and
    # multiplied back on the way out; a power of two keeps the round trip
    # bitwise exact in binary floating point
    value_scale: float = 256.0
    version: int = MODEL_FORMAT_VERSION

    @property
    def total_factor(self) -> int:
        return int(np.prod([s.factor for s in self.stages]))

    @property
    def stage_factors(self) -> list[int]:
        return [s.factor for s in self.stages]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for s in self.stages:
            out.extend(s.parameters())
        if self.msf_unit is not None:
            out.extend(self.msf_unit.parameters())
        return out

    def cascade_parameters(self) -> list[np.ndarray]:
        out = []
        for s in self.stages:
            out.extend(s.parameters())
        return out

    def zero_weights(self) -> None:
        for s in self.stages:
            for u in s.units:
                u.zero_weights()
        if self.msf_unit is not None:
            self.msf_unit.zero_weights()


def create_model(total_factor: int, unit_config: DcnnUnitConfig | None = None,
                 with_msf: bool = True, seed: int = 0, dtype=np.float64,
                 value_scale: float = 256.0) -> CascadeModel:
    """Freshly initialized cascade for a total factor, with optional fusion unit."""
    factors = plan_stage_factors(total_factor)
    cfg = unit_config or DcnnUnitConfig()
    rng = np.random.default_rng(seed)
    stages = [NvsStage.create(r, cfg, rng, dtype) for r in factors]
    msf = None
    if with_msf:
        msf_cfg = DcnnUnitConfig(num_layers=cfg.num_layers, channels=cfg.channels,
                                 kernel=5, residual=False, in_channels=len(factors))
        msf = DcnnUnit.create(msf_cfg, rng, dtype)
    return CascadeModel(stages=stages, msf_unit=msf, value_scale=value_scale)


def cascade_forward(lr: np.ndarray, model: CascadeModel) -> list[np.ndarray]:
    """Run all stages, feeding each output to the next; returns every stage output."""
    if not model.stages:
        raise UsageError("model has no stages")
    x = lr
    outputs = []
    for stage in model.stages:
        x = stage.forward(x)
        outputs.append(x)
    return outputs


def deep_supervised_loss(stage_outputs: list[np.ndarray], pyramid: list[np.ndarray]):
    """Sum of per-stage MSE terms (unit weights); returns (loss, per-stage grads)."""
    if len(stage_outputs) != len(pyramid):
        raise ShapeError(f"{len(stage_outputs)} stage outputs vs {len(pyramid)} targets")
    total = 0.0
    grads = []
    for out, target in zip(stage_outputs, pyramid):
        loss, grad = mse_loss(out, target)
        total += loss
        grads.append(grad)
    return total, grads


def cascade_backward(model: CascadeModel, supervision_grads: list[np.ndarray]) -> list[np.ndarray]:
    """Backprop supervision gradients through every stage, including the
    cross-stage path (stage k's input gradient flows into stage k-1).

    Returns gradients aligned with model.cascade_parameters().
    """
    if len(supervision_grads) != len(model.stages):
        raise ShapeError("one supervision gradient per stage required")
    per_stage: list[list[np.ndarray]] = [None] * len(model.stages)
    g = supervision_grads[-1]
    for k in range(len(model.stages) - 1, -1, -1):
        g_in, grads = model.stages[k].backward(g)
        per_stage[k] = grads
        if k > 0:
            g = supervision_grads[k - 1] + g_in
    flat: list[np.ndarray] = []
    for grads in per_stage:
        flat.extend(grads)
    return flat


def msf_forward(stage_outputs: list[np.ndarray], model: CascadeModel) -> np.ndarray:
    """Fuse all stage outputs: bicubic-upsample to final resolution, concatenate
    coarsest first, run the 5x5 fusion unit, add the final stage's output."""
    if model.msf_unit is None:
        raise UsageError("model has no fusion unit")
    if not stage_outputs:
        raise UsageError("need at least one stage output")
    final = stage_outputs[-1]
    b, _, h, w = final.shape
    channels = []
    for out in stage_outputs:
        if out.shape[2:] == (h, w):
            channels.append(out[:, 0])
        else:
            channels.append(np.stack([resize_array(out[i, 0], h, w) for i in range(b)]))
    fused_in = np.stack(channels, axis=1).astype(final.dtype)
    return model.msf_unit.forward(fused_in) + final


def infer(lr: np.ndarray | DepthMap, model: CascadeModel, use_msf: bool = False) -> np.ndarray:
    """End-to-end super-resolution of a single LR map (2-D in, 2-D out)."""
    values = lr.values if isinstance(lr, DepthMap) else np.asarray(lr, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected a 2-D map, got shape {values.shape}")
    dtype = model.stages[0].units[0].layers[0].weights.dtype
    x = (values / model.value_scale).astype(dtype)[None, None]
    outputs = cascade_forward(x, model)
    if use_msf:
        if model.msf_unit is None:
            raise UsageError("use_msf requested but the model has no fusion unit")
        return msf_forward(outputs, model)[0, 0].astype(np.float64) * model.value_scale
    return outputs[-1][0, 0].astype(np.float64) * model.value_scale


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    initial_lr: float = 0.1
    final_lr: float = 1e-4
    lr_steps: int = 4  # stepwise x0.1 decreases over the run
    lr_gamma: float = 0.1
    momentum: float = 0.9
    clip_threshold: float = 0.1
    seed: int = 0
    dtype: str = "float64"  # float32 selectable for speed runs

    def __post_init__(self):
        if self.lr_gamma >= 1.0 or self.lr_gamma <= 0.0:
            raise UsageError("lr schedule must be strictly decreasing (0 < gamma < 1)")

    def lr_at(self, epoch: int) -> float:
        step = min(epoch * self.lr_steps // max(self.epochs, 1), self.lr_steps - 1)
        return self.initial_lr * self.lr_gamma**step


def _batch_pyramid(hr: np.ndarray, stage_factors: list[int], dtype) -> list[np.ndarray]:
    """Supervision targets for a batch of HR patches, coarsest first, as NCHW."""
    levels = [hr.astype(np.float64)]
    for rho in reversed(stage_factors[1:]):
        prev = levels[-1]
        oh, ow = prev.shape[1] // rho, prev.shape[2] // rho
        levels.append(np.stack([resize_array(p, oh, ow) for p in prev]))
    return [lvl[:, None].astype(dtype) for lvl in levels[::-1]]


def train(model: CascadeModel, hr_patches: np.ndarray, lr_patches: np.ndarray,
          config: TrainConfig) -> list[float]:
    """Patch-batch SGD with momentum and adjustable clipping under deep supervision.

    hr_patches: (N, ps, ps); lr_patches: (N, ps/r, ps/r). Returns the per-epoch
    mean training loss. Deterministic given the config seed.
    """
    if len(hr_patches) == 0:
        raise UsageError("empty patch set")
    dtype = np.dtype(config.dtype)
    scale = model.value_scale
    pyramid_all = _batch_pyramid(np.asarray(hr_patches) / scale, model.stage_factors, dtype)
    x_all = (np.asarray(lr_patches) / scale).astype(dtype)[:, None]

    params = model.cascade_parameters()
    state = OptimizerState(learning_rate=config.initial_lr, momentum=config.momentum,
                           clip_threshold=config.clip_threshold)
    rng = np.random.default_rng(config.seed)
    n = len(x_all)
    trace: list[float] = []
    for epoch in range(config.epochs):
        state.learning_rate = config.lr_at(epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            outputs = cascade_forward(x_all[idx], model)
            targets = [lvl[idx] for lvl in pyramid_all]
            loss, sup_grads = deep_supervised_loss(outputs, targets)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = cascade_backward(model, sup_grads)
            sgd_momentum_step(params, grads, state)
            epoch_loss += loss * len(idx)
        trace.append(epoch_loss / n)
    return trace


def train_msf(model: CascadeModel, hr_patches: np.ndarray, lr_patches: np.ndarray,
              config: TrainConfig) -> list[float]:
    """Train only the fusion unit on top of a frozen cascade.

    The cascade outputs (and their upsampled versions) are treated as fixed
    inputs; gradients flow only into the fusion unit's parameters.
    """
    if model.msf_unit is None:
        raise UsageError("model has no fusion unit")
    dtype = np.dtype(config.dtype)
    scale = model.value_scale
    x_all = (np.asarray(lr_patches) / scale).astype(dtype)[:, None]
    hr_all = (np.asarray(hr_patches) / scale).astype(dtype)[:, None]

    params = model.msf_unit.parameters()
    state = OptimizerState(learning_rate=config.initial_lr, momentum=config.momentum,
                           clip_threshold=config.clip_threshold)
    rng = np.random.default_rng(config.seed)
    n = len(x_all)
    trace: list[float] = []
    for epoch in range(config.epochs):
        state.learning_rate = config.lr_at(epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            outputs = cascade_forward(x_all[idx], model)
            fused = msf_forward(outputs, model)
            loss, grad = mse_loss(fused, hr_all[idx])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite fusion loss at epoch {epoch}, batch {bi}")
            _, grads = model.msf_unit.backward(grad)
            sgd_momentum_step(params, grads, state)
            epoch_loss += loss * len(idx)
        trace.append(epoch_loss / n)
    return trace


def warm_start_first_stage(model: CascadeModel, donor: CascadeModel) -> None:
    """Copy the donor's first-stage unit parameters into model's first stage
    (the x2-model initialization for larger factors); shapes must match."""
    src, dst = donor.stages[0], model.stages[0]
    if src.factor != dst.factor:
        raise UsageError(f"factor mismatch: donor {src.factor} vs model {dst.factor}")
    for su, du in zip(src.units, dst.units):
        for sl, dl in zip(su.layers, du.layers):
            if sl.weights.shape != dl.weights.shape:
                raise ShapeError("donor unit architecture does not match")
            dl.weights[...] = sl.weights
            dl.bias[...] = sl.bias


# ---------------------------------------------------------------------------
# serialization: magic "DSRF", u32 version, u64 header length, JSON header,
# raw float64 little-endian tensor payloads at the recorded offsets.
# ---------------------------------------------------------------------------

def _named_tensors(model: CascadeModel) -> list[tuple[str, np.ndarray]]:
    out = []
    for si, stage in enumerate(model.stages):
        for ui, unit in enumerate(stage.units):
            for li, layer in enumerate(unit.layers):
                out.append((f"stage{si}/unit{ui}/layer{li}/weights", layer.weights))
                out.append((f"stage{si}/unit{ui}/layer{li}/bias", layer.bias))
    if model.msf_unit is not None:
        for li, layer in enumerate(model.msf_unit.layers):
            out.append((f"msf/layer{li}/weights", layer.weights))
            out.append((f"msf/layer{li}/bias", layer.bias))
    return out


def save_model(model: CascadeModel, path) -> None:
    tensors = _named_tensors(model)
    directory = []
    offset = 0
    for name, arr in tensors:
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    dtype = str(model.stages[0].units[0].layers[0].weights.dtype)
    header = {
        "dtype": dtype,
        "value_scale": model.value_scale,
        "stages": [{"factor": s.factor, "unit_config": asdict(s.units[0].config)}
                   for s in model.stages],
        "msf_config": None if model.msf_unit is None else asdict(model.msf_unit.config),
        "tensors": directory,
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, arr in tensors:
            f.write(arr.astype("<f8").tobytes())


def load_model(path) -> CascadeModel:
    with open(path, "rb") as f:
        if f.read(4) != MODEL_MAGIC:
            raise DataError(f"{path} is not a model file (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format version {version}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        payload = f.read()

    dtype = np.dtype(header["dtype"])
    stages = []
    for sdesc in header["stages"]:
        cfg = DcnnUnitConfig(**sdesc["unit_config"])
        stages.append(NvsStage.create(sdesc["factor"], cfg, np.random.default_rng(0), dtype))
    msf = None
    if header["msf_config"] is not None:
        msf = DcnnUnit.create(DcnnUnitConfig(**header["msf_config"]),
                              np.random.default_rng(0), dtype)
    model = CascadeModel(stages=stages, msf_unit=msf,
                         value_scale=float(header.get("value_scale", 256.0)),
                         version=version)

    by_name = {t["name"]: t for t in header["tensors"]}
    for name, arr in _named_tensors(model):
        entry = by_name.get(name)
        if entry is None:
            raise DataError(f"model file missing tensor {name}")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        raw = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        if raw.size != count:
            raise DataError(f"truncated payload for tensor {name}")
        arr[...] = raw.reshape(entry["shape"]).astype(dtype)
    return model
