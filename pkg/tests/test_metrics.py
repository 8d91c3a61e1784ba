"""Quality metrics: RMSE, windowed SSIM, bad-pixel rate, CSV report."""

import numpy as np
import pytest

from depthsr.errors import ShapeError
from depthsr.metrics import (
    bad_pixel_percent,
    evaluate_pair,
    rmse,
    ssim,
    write_report_csv,
)


def reference_ssim(pred, gt, dynamic_range=255.0):
    """Independent scalar SSIM: explicit loops over valid 11x11 windows."""
    size, sigma = 11, 1.5
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    h, w = pred.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            a = pred[i:i + size, j:j + size]
            b = gt[i:i + size, j:j + size]
            mu_a = (win * a).sum()
            mu_b = (win * b).sum()
            var_a = (win * a * a).sum() - mu_a**2
            var_b = (win * b * b).sum() - mu_b**2
            cov = (win * a * b).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(vals))


def test_rmse_hand_case():
    pred = np.array([[0.0, 3.0]])
    gt = np.array([[4.0, 3.0]])
    # squared errors 16 and 0 -> mean 8 -> sqrt(8)
    assert rmse(pred, gt) == pytest.approx(np.sqrt(8.0), abs=1e-12)


def test_rmse_crop_and_quantize():
    pred = np.zeros((5, 5))
    pred[0, 0] = 100.0  # border garbage removed by crop
    gt = np.zeros((5, 5))
    assert rmse(pred, gt, crop=1) == 0.0
    assert rmse(np.full((2, 2), 0.4), gt[:2, :2], quantize=True) == 0.0


def test_ssim_identical_images_is_one():
    x = np.random.default_rng(0).uniform(0, 255, size=(20, 20))
    assert ssim(x, x) == 1.0


def test_ssim_matches_scalar_reference():
    rng = np.random.default_rng(1)
    for _ in range(5):
        gt = rng.uniform(0, 255, size=(16, 18))
        pred = gt + rng.normal(0, 10, size=gt.shape)
        assert ssim(pred, gt) == pytest.approx(reference_ssim(pred, gt), abs=1e-9)


def test_ssim_decreases_with_noise():
    rng = np.random.default_rng(2)
    gt = rng.uniform(0, 255, size=(24, 24))
    s_small = ssim(gt + rng.normal(0, 2, gt.shape), gt)
    s_big = ssim(gt + rng.normal(0, 40, gt.shape), gt)
    assert s_big < s_small < 1.0


def test_bad_pixel_percent_strict_threshold():
    pred = np.array([[0.0, 1.0, 2.5, 5.0]])
    gt = np.zeros((1, 4))
    # |err| strictly greater than 1.0 counts: 2.5 and 5.0 -> 50%
    assert bad_pixel_percent(pred, gt, threshold=1.0) == pytest.approx(50.0)


def test_metrics_reject_mismatched_shapes():
    with pytest.raises(ShapeError):
        rmse(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_report_csv_format(tmp_path):
    rng = np.random.default_rng(3)
    gt = rng.uniform(0, 255, size=(16, 16))
    reports = [
        evaluate_pair("b", gt + 1.0, gt),
        evaluate_pair("a", gt, gt),
    ]
    path = tmp_path / "report.csv"
    write_report_csv(reports, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "id,rmse,ssim,bad_pct"
    ids = [ln.split(",")[0] for ln in lines[1:]]
    assert ids == ["a", "b"]  # sorted by id
    row_a = lines[1].split(",")
    assert float(row_a[1]) == 0.0 and float(row_a[2]) == 1.0
