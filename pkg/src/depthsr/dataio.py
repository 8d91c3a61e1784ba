"""Depth map persistence (binary PGM / PFM), dataset manifests and patch extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depthmap import DepthMap
from .errors import DataError, UsageError
from .resample import NoiseSpec, add_depth_noise, bicubic_resize

MANIFEST_VERSION = 1
FLAT_PATCH_THRESHOLD = 1e-9


# ---------------------------------------------------------------------------
# image files
# ---------------------------------------------------------------------------

def _read_pgm_token(f) -> bytes:
    """Next whitespace-delimited token, skipping '#' comment lines."""
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise DataError("truncated PGM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_depth(path) -> DepthMap:
    """Read a binary PGM (P5) or grayscale PFM (Pf) depth file."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic == b"P5":
            w = int(_read_pgm_token(f))
            h = int(_read_pgm_token(f))
            maxval = int(_read_pgm_token(f))
            if maxval <= 0 or maxval > 65535:
                raise DataError(f"invalid PGM maxval {maxval} in {path}")
            dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
            raw = f.read(h * w * dtype.itemsize)
            if len(raw) != h * w * dtype.itemsize:
                raise DataError(f"truncated PGM payload in {path}")
            values = np.frombuffer(raw, dtype=dtype).reshape(h, w).astype(np.float64)
            return DepthMap(values=values, value_range=(0.0, float(maxval)))
        if magic == b"Pf":
            f.readline()
            dims = f.readline().split()
            if len(dims) != 2:
                raise DataError(f"malformed PFM dimension line in {path}")
            w, h = int(dims[0]), int(dims[1])
            scale = float(f.readline())
            dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
            raw = f.read(h * w * 4)
            if len(raw) != h * w * 4:
                raise DataError(f"truncated PFM payload in {path}")
            values = np.frombuffer(raw, dtype=dtype).reshape(h, w)
            values = np.flipud(values).astype(np.float64)  # PFM rows are bottom-up
            return DepthMap(values=values, value_range=(float(values.min()), float(values.max())))
        raise DataError(f"unsupported image magic {magic!r} in {path} (expected P5 or Pf)")


def write_depth(path, dm: DepthMap) -> None:
    """Write a depth map; format chosen by extension (.pgm or .pfm).

    PGM rounds to integers at the bit depth implied by value_range
    (maxval 255 or 65535); PFM stores raw float32, scale -1.0.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        maxval = 255 if dm.value_range[1] <= 255 else 65535
        dtype = np.dtype("u1") if maxval == 255 else np.dtype(">u2")
        data = np.clip(np.round(dm.values), 0, maxval).astype(dtype)
        with open(path, "wb") as f:
            f.write(f"P5\n{dm.width} {dm.height}\n{maxval}\n".encode())
            f.write(data.tobytes())
    elif suffix == ".pfm":
        data = np.flipud(dm.values.astype("<f4"))
        with open(path, "wb") as f:
            f.write(f"Pf\n{dm.width} {dm.height}\n-1.0\n".encode())
            f.write(data.tobytes())
    else:
        raise DataError(f"unsupported output format {suffix!r} (use .pgm or .pfm)")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str
    mask_path: str | None = None
    split: str = "train"  # train / val / test


@dataclass
class DatasetManifest:
    """Provenance of a training/eval dataset: files plus degradation recipe."""

    entries: list[ManifestEntry]
    factor: int
    noise_delta: float | None = None
    noise_seed: int = 0
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise DataError("manifest contains duplicate ground-truth paths")

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "version": manifest.version,
        "factor": manifest.factor,
        "noise": (None if manifest.noise_delta is None
                  else {"delta": manifest.noise_delta, "seed": manifest.noise_seed}),
        "entries": [
            {"path": e.path, "mask_path": e.mask_path, "split": e.split}
            for e in manifest.entries
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


def load_manifest(path) -> DatasetManifest:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed manifest JSON in {path}: {e}") from e
    if doc.get("version") != MANIFEST_VERSION:
        raise DataError(f"unsupported manifest version {doc.get('version')} in {path}")
    noise = doc.get("noise")
    return DatasetManifest(
        entries=[ManifestEntry(path=e["path"], mask_path=e.get("mask_path"),
                               split=e.get("split", "train"))
                 for e in doc["entries"]],
        factor=int(doc["factor"]),
        noise_delta=None if noise is None else float(noise["delta"]),
        noise_seed=0 if noise is None else int(noise.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# patch extraction
# ---------------------------------------------------------------------------

@dataclass
class Patch:
    image_id: str
    row: int
    col: int
    hr: np.ndarray
    lr: np.ndarray


@dataclass
class PatchSet:
    factor: int
    patch_size: int
    patches: list[Patch] = field(default_factory=list)
    skipped_images: int = 0

    @property
    def hr_batch(self) -> np.ndarray:
        return np.stack([p.hr for p in self.patches])

    @property
    def lr_batch(self) -> np.ndarray:
        return np.stack([p.lr for p in self.patches])


def build_patchset(manifest: DatasetManifest, patch_size: int, stride: int,
                   seed: int = 0, split: str = "train",
                   base_dir: str | Path | None = None) -> PatchSet:
    """Deterministic patch grid with per-manifest degradation.

    Flat HR patches (value range below 1e-9) are dropped; images smaller than
    the patch size are skipped and counted. LR patches are bicubic-downsampled
    HR patches, plus depth-dependent noise when the manifest specifies it, with
    per-patch noise seeds derived from (seed, image index, patch index).
    """
    r = manifest.factor
    if patch_size % r != 0:
        raise UsageError(f"patch size {patch_size} not divisible by factor {r}")
    base = Path(base_dir) if base_dir is not None else None
    out = PatchSet(factor=r, patch_size=patch_size)
    for img_idx, entry in enumerate(manifest.split(split)):
        p = Path(entry.path)
        if base is not None and not p.is_absolute():
            p = base / p
        dm = read_depth(p)
        if dm.height < patch_size or dm.width < patch_size:
            out.skipped_images += 1
            continue
        patch_idx = 0
        for row in range(0, dm.height - patch_size + 1, stride):
            for col in range(0, dm.width - patch_size + 1, stride):
                hr = dm.values[row:row + patch_size, col:col + patch_size]
                if hr.max() - hr.min() < FLAT_PATCH_THRESHOLD:
                    continue
                lr_map = bicubic_resize(DepthMap(hr, dm.value_range), 1 / r)
                if manifest.noise_delta is not None:
                    sub = np.random.SeedSequence(
                        [seed, manifest.noise_seed, img_idx, patch_idx]).generate_state(1)[0]
                    lr_map = add_depth_noise(lr_map, NoiseSpec(manifest.noise_delta, int(sub)))
                out.patches.append(Patch(image_id=p.stem, row=row, col=col,
                                         hr=hr.copy(), lr=lr_map.values))
                patch_idx += 1
    return out
