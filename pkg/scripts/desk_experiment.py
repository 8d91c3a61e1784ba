#!/usr/bin/env python3
"""End-to-end desk-scale experiment.

Generates synthetic piecewise-constant depth maps, trains a x2 cascade,
compares held-out RMSE against bicubic upsampling, and measures the effect
of TV refinement on noise-degraded inputs.
"""

import argparse
import time

import numpy as np

from depthsr import network
from depthsr.depthmap import DepthMap
from depthsr.dfs import refine_output
from depthsr.metrics import rmse
from depthsr.resample import NoiseSpec, add_depth_noise, resize_array
from depthsr.synthetic import make_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--lr", type=float, default=0.3)
    ap.add_argument("--layers", type=int, default=5)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--clip", type=float, default=0.01)
    ap.add_argument("--noise-delta", type=float, default=651.0)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--save-model", default=None)
    args = ap.parse_args()

    maps = make_dataset(args.count, args.size, seed=args.seed)
    n_test = max(1, args.count * 15 // 100)
    train_maps, test_maps = maps[:-n_test], maps[-n_test:]

    patch = 32
    hr, lr = [], []
    for m in train_maps:
        v = m.values
        for i in range(0, args.size - patch + 1, patch):
            for j in range(0, args.size - patch + 1, patch):
                p = v[i:i + patch, j:j + patch]
                if p.max() - p.min() < 1e-9:
                    continue
                hr.append(p)
                lr.append(resize_array(p, patch // 2, patch // 2))
    print(f"{len(train_maps)} train maps -> {len(hr)} patches, "
          f"{len(test_maps)} held-out maps")

    unit = network.DcnnUnitConfig(num_layers=args.layers, channels=args.channels)
    model = network.create_model(2, unit, with_msf=False, seed=0, dtype=np.float32)
    cfg = network.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                              initial_lr=args.lr, clip_threshold=args.clip,
                              seed=0, dtype="float32")
    t0 = time.time()
    trace = network.train(model, np.array(hr), np.array(lr), cfg)
    print(f"trained in {time.time() - t0:.0f}s, "
          f"loss {trace[0]:.5f} -> {trace[-1]:.5f}")

    ratios = []
    for m in test_maps:
        lr_m = resize_array(m.values, args.size // 2, args.size // 2)
        pred = network.infer(lr_m, model)
        bic = resize_array(lr_m, args.size, args.size)
        ratios.append(rmse(pred, m.values) / rmse(bic, m.values))
    print(f"held-out RMSE vs bicubic: mean ratio {np.mean(ratios):.3f}, "
          f"worst {np.max(ratios):.3f} (lower is better; <0.7 is the target)")

    helped = 0
    for k, m in enumerate(test_maps):
        lr_m = resize_array(m.values, args.size // 2, args.size // 2)
        noisy = add_depth_noise(DepthMap(lr_m), NoiseSpec(args.noise_delta, seed=k))
        pred = network.infer(noisy.values, model)
        refined = refine_output(pred)
        if rmse(refined, m.values) <= rmse(pred, m.values):
            helped += 1
    print(f"TV refinement improved {helped}/{len(test_maps)} noisy held-out maps")

    if args.save_model:
        network.save_model(model, args.save_model)
        print(f"model saved to {args.save_model}")


if __name__ == "__main__":
    main()
