"""File formats, manifests, and patch extraction."""

import json

import numpy as np
import pytest

from depthsr.dataio import (
    DatasetManifest,
    ManifestEntry,
    build_patchset,
    load_manifest,
    read_depth,
    save_manifest,
    write_depth,
)
from depthsr.depthmap import DepthMap
from depthsr.errors import DataError


def test_pgm_8bit_roundtrip(tmp_path):
    vals = np.arange(12, dtype=np.float64).reshape(3, 4) * 20
    p = tmp_path / "m.pgm"
    write_depth(p, DepthMap(vals, value_range=(0, 255)))
    back = read_depth(p)
    np.testing.assert_array_equal(back.values, vals)
    assert back.value_range == (0.0, 255.0)


def test_pgm_16bit_roundtrip(tmp_path):
    vals = np.array([[0.0, 300.0], [65535.0, 1234.0]])
    p = tmp_path / "m16.pgm"
    write_depth(p, DepthMap(vals, value_range=(0, 65535)))
    back = read_depth(p)
    np.testing.assert_array_equal(back.values, vals)
    assert back.value_range == (0.0, 65535.0)


def test_pgm_16bit_is_big_endian(tmp_path):
    p = tmp_path / "b.pgm"
    write_depth(p, DepthMap(np.array([[258.0]]), value_range=(0, 65535)))
    raw = p.read_bytes()
    assert raw.endswith(bytes([1, 2]))  # 258 = 0x0102 big-endian


def test_pgm_rounds_and_clips(tmp_path):
    p = tmp_path / "r.pgm"
    write_depth(p, DepthMap(np.array([[0.4, 254.6, 300.0, -5.0]]),
                            value_range=(0, 255)))
    np.testing.assert_array_equal(read_depth(p).values, [[0.0, 255.0, 255.0, 0.0]])


def test_pfm_roundtrip_and_row_order(tmp_path):
    vals = np.array([[1.5, -2.25], [3.0, 4.125]])
    p = tmp_path / "m.pfm"
    write_depth(p, DepthMap(vals))
    back = read_depth(p)
    np.testing.assert_array_equal(back.values, vals)
    # PFM stores rows bottom-up; the first payload float is the last row
    raw = p.read_bytes()
    payload = raw[raw.index(b"-1.0\n") + 5:]
    assert np.frombuffer(payload[:4], "<f4")[0] == np.float32(3.0)


def test_read_rejects_bad_magic_and_truncation(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(DataError):
        read_depth(bad)
    trunc = tmp_path / "trunc.pgm"
    trunc.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(DataError):
        read_depth(trunc)


def test_write_rejects_unknown_extension(tmp_path):
    with pytest.raises(DataError):
        write_depth(tmp_path / "x.png", DepthMap(np.zeros((2, 2))))


def test_manifest_roundtrip(tmp_path):
    m = DatasetManifest(
        entries=[ManifestEntry("a.pgm", split="train"),
                 ManifestEntry("b.pgm", split="test")],
        factor=4, noise_delta=651.0, noise_seed=9)
    p = tmp_path / "manifest.json"
    save_manifest(m, p)
    doc = json.loads(p.read_text())
    assert doc["version"] == 1
    back = load_manifest(p)
    assert back.factor == 4
    assert back.noise_delta == 651.0
    assert [e.path for e in back.split("test")] == ["b.pgm"]


def test_manifest_rejects_duplicates():
    with pytest.raises(DataError):
        DatasetManifest(entries=[ManifestEntry("a.pgm"), ManifestEntry("a.pgm")],
                        factor=2)


def test_build_patchset_drops_flat_patches(tmp_path):
    # left half textured, right half constant -> only left patches survive
    rng = np.random.default_rng(0)
    vals = np.full((32, 64), 80.0)
    vals[:, :32] = rng.uniform(10, 255, size=(32, 32))
    write_depth(tmp_path / "img.pgm", DepthMap(vals))
    m = DatasetManifest(entries=[ManifestEntry("img.pgm")], factor=2)
    ps = build_patchset(m, patch_size=16, stride=16, base_dir=tmp_path)
    assert len(ps.patches) == 4  # 2x4 grid minus 4 flat right-half patches
    hr = ps.hr_batch
    lr = ps.lr_batch
    assert hr.shape == (4, 16, 16)
    assert lr.shape == (4, 8, 8)


def test_build_patchset_noise_is_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    write_depth(tmp_path / "img.pgm",
                DepthMap(rng.uniform(50, 255, size=(32, 32))))
    m = DatasetManifest(entries=[ManifestEntry("img.pgm")], factor=2,
                        noise_delta=651.0, noise_seed=5)
    a = build_patchset(m, 16, 16, seed=3, base_dir=tmp_path)
    b = build_patchset(m, 16, 16, seed=3, base_dir=tmp_path)
    np.testing.assert_array_equal(a.lr_batch, b.lr_batch)
    clean = build_patchset(
        DatasetManifest(entries=[ManifestEntry("img.pgm")], factor=2),
        16, 16, seed=3, base_dir=tmp_path)
    assert not np.array_equal(a.lr_batch, clean.lr_batch)


def test_build_patchset_skips_small_images(tmp_path):
    write_depth(tmp_path / "small.pgm",
                DepthMap(np.random.default_rng(2).uniform(10, 255, size=(8, 8))))
    m = DatasetManifest(entries=[ManifestEntry("small.pgm")], factor=2)
    ps = build_patchset(m, patch_size=16, stride=16, base_dir=tmp_path)
    assert len(ps.patches) == 0
    assert ps.skipped_images == 1
