"""Command-line entry point: degrade, train, sr, eval, refine, gradcheck.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numerical failure. Flags may
be preloaded from a flat key=value config file (flags override file values;
unknown keys are rejected). Every command writes an effective-config snapshot
beside its primary output, and output files are written atomically.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import dataio, dfs, metrics, network
from .depthmap import DepthMap
from .errors import DataError, NumericalError, UsageError
from .gradcheck import run_all
from .resample import NoiseSpec, add_depth_noise, bicubic_resize


def _atomic_write_depth(path: Path, dm: DepthMap) -> None:
    tmp = tempfile.NamedTemporaryFile(dir=path.parent, suffix=path.suffix, delete=False)
    tmp.close()
    try:
        dataio.write_depth(tmp.name, dm)
        os.replace(tmp.name, path)
    except BaseException:
        os.unlink(tmp.name)
        raise


def _write_snapshot(out_path: Path, command: str, options: dict) -> None:
    snap = out_path.with_name(out_path.name + ".config")
    lines = [f"command = {command}"]
    for key in sorted(options):
        lines.append(f"{key} = {options[key]}")
    snap.write_text("\n".join(lines) + "\n")


def _load_config_file(path: str, known_keys: set[str]) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in known_keys:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = val.strip()
    return values


def _apply_config_file(args: argparse.Namespace, parser_defaults: dict) -> None:
    """File values fill in options the user left at their defaults."""
    if not getattr(args, "config", None):
        return
    known = {k for k in vars(args) if k not in ("config", "func", "command")}
    file_values = _load_config_file(args.config, known)
    for key, raw in file_values.items():
        if getattr(args, key) != parser_defaults.get(key):
            continue  # explicit flag wins
        current = parser_defaults.get(key)
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int) and not isinstance(current, bool):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)


def _options(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "command")}


def cmd_degrade(args) -> int:
    dm = dataio.read_depth(args.input)
    if dm.height % args.factor or dm.width % args.factor:
        raise DataError(f"input size {dm.height}x{dm.width} not divisible by factor {args.factor}")
    lr = bicubic_resize(dm, 1 / args.factor)
    if args.noise_delta is not None:
        lr = add_depth_noise(lr, NoiseSpec(args.noise_delta, args.seed))
    out = Path(args.out)
    _atomic_write_depth(out, lr)
    _write_snapshot(out, "degrade", _options(args))
    return 0


def cmd_train(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    if manifest.factor != args.factor:
        raise UsageError(f"manifest factor {manifest.factor} != requested {args.factor}")
    patchset = dataio.build_patchset(manifest, args.patch_size, args.stride or args.patch_size,
                                     seed=args.seed, base_dir=Path(args.manifest).parent)
    if not patchset.patches:
        raise DataError("no usable training patches in the manifest")
    unit_cfg = network.DcnnUnitConfig(num_layers=args.layers, channels=args.channels)
    model = network.create_model(args.factor, unit_cfg, with_msf=args.msf,
                                 seed=args.seed, dtype=np.dtype(args.dtype))
    cfg = network.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                              initial_lr=args.lr, lr_steps=args.lr_steps,
                              momentum=args.momentum, clip_threshold=args.clip,
                              seed=args.seed, dtype=args.dtype)
    t0 = time.time()
    trace = network.train(model, patchset.hr_batch, patchset.lr_batch, cfg)
    if args.msf:
        network.train_msf(model, patchset.hr_batch, patchset.lr_batch, cfg)
    out = Path(args.out_model)
    tmp = tempfile.NamedTemporaryFile(dir=out.parent, suffix=".dsrf", delete=False)
    tmp.close()
    try:
        network.save_model(model, tmp.name)
        os.replace(tmp.name, out)
    except BaseException:
        os.unlink(tmp.name)
        raise
    _write_snapshot(out, "train", _options(args))
    print(f"trained on {len(patchset.patches)} patches in {time.time() - t0:.1f}s; "
          f"final loss {trace[-1]:.6g}")
    return 0


def cmd_sr(args) -> int:
    model = network.load_model(args.model)
    dm = dataio.read_depth(args.input)
    result = network.infer(dm.values, model, use_msf=args.msf)
    if args.dfs:
        result = dfs.refine_output(result, dfs.IrlsConfig(lam=args.dfs_lambda))
    out = Path(args.out)
    _atomic_write_depth(out, DepthMap(result, dm.value_range))
    _write_snapshot(out, "sr", _options(args))
    return 0


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds = sorted(p for p in pred_dir.iterdir() if p.suffix.lower() in (".pgm", ".pfm"))
    if not preds:
        raise DataError(f"no depth files found in {pred_dir}")

    def one(path: Path) -> metrics.EvalReport:
        gt_path = gt_dir / path.name
        if not gt_path.exists():
            raise DataError(f"no ground truth for {path.name} in {gt_dir}")
        pred = dataio.read_depth(path)
        gt = dataio.read_depth(gt_path)
        return metrics.evaluate_pair(path.stem, pred.values, gt.values,
                                     dynamic_range=args.dynamic_range)

    workers = int(os.environ.get("DSR_THREADS", os.cpu_count() or 1))
    if workers > 1 and len(preds) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, preds))
    else:
        reports = [one(p) for p in preds]
    out = Path(args.csv)
    tmp = tempfile.NamedTemporaryFile(dir=out.parent, suffix=".csv", delete=False)
    tmp.close()
    try:
        metrics.write_report_csv(reports, tmp.name)
        os.replace(tmp.name, out)
    except BaseException:
        os.unlink(tmp.name)
        raise
    _write_snapshot(out, "eval", _options(args))
    return 0


def cmd_refine(args) -> int:
    dm = dataio.read_depth(args.input)
    refined = dfs.refine_output(dm.values, dfs.IrlsConfig(lam=getattr(args, "lambda")))
    out = Path(args.out)
    _atomic_write_depth(out, dm.with_values(refined))
    _write_snapshot(out, "refine", _options(args))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_all(num_seeds=args.seeds, base_seed=args.seed)
    worst: dict[str, float] = {}
    failed = [r for r in results if not r.passed]
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.rel_error)
    for name in sorted(worst):
        print(f"{name:24s} max rel err {worst[name]:.3e}")
    if failed:
        for r in failed:
            print(f"FAIL {r.name} seed={r.seed} rel_err={r.rel_error:.3e}", file=sys.stderr)
        raise NumericalError(f"{len(failed)} gradient checks failed")
    print(f"all {len(results)} gradient checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthsr",
                                     description="Depth map super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="bicubic-downsample a depth map, optionally adding noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--noise-delta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train a cascade model from a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--patch-size", type=int, default=32)
    p.add_argument("--stride", type=int, default=0)
    p.add_argument("--layers", type=int, default=10)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lr-steps", type=int, default=4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip", type=float, default=0.1)
    p.add_argument("--msf", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", default="float64", choices=("float64", "float32"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="super-resolve a depth map with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--msf", action="store_true")
    p.add_argument("--dfs", action="store_true")
    p.add_argument("--dfs-lambda", type=float, default=0.7)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth, writing CSV")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--dynamic-range", type=float, default=255.0)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("refine", help="TV/IRLS refinement of a depth map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--lambda", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    defaults = {a.dest: a.default
                for sp in parser._subparsers._group_actions[0].choices.values()
                for a in sp._actions}
    try:
        _apply_config_file(args, defaults)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
