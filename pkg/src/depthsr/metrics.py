"""Evaluation metrics: RMSE, SSIM and percent-bad-pixels, plus CSV reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError


def _check_pair(pred: np.ndarray, gt: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def rmse(pred: np.ndarray, gt: np.ndarray, crop: int = 0, quantize: bool = False) -> float:
    """sqrt(sum((pred - gt)^2) / N) over all pixels.

    crop shaves a border of that many pixels from both maps before comparing;
    quantize rounds both maps to integers first (8-bit-style evaluation).
    """
    pred, gt = _check_pair(pred, gt)
    if crop:
        if 2 * crop >= min(pred.shape):
            raise UsageError(f"crop {crop} exceeds image size {pred.shape}")
        pred = pred[crop:-crop, crop:-crop]
        gt = gt[crop:-crop, crop:-crop]
    if quantize:
        pred = np.round(pred)
        gt = np.round(gt)
    return float(np.sqrt(np.mean((pred - gt) ** 2)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _windowed_mean(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = win.shape[0]
    patches = np.lib.stride_tricks.sliding_window_view(x, (k, k))
    return np.einsum("hwij,ij->hw", patches, win, optimize=True)


def ssim(pred: np.ndarray, gt: np.ndarray, dynamic_range: float = 255.0) -> float:
    """Structural similarity with the standard 11x11 Gaussian window (sigma 1.5).

    Computed over fully valid window positions only (no padding).
    """
    pred, gt = _check_pair(pred, gt)
    if dynamic_range <= 0:
        raise UsageError(f"dynamic_range must be positive, got {dynamic_range}")
    win = _gaussian_window()
    if min(pred.shape) < win.shape[0]:
        raise UsageError(f"image {pred.shape} smaller than the {win.shape[0]}x{win.shape[0]} SSIM window")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    mu_x = _windowed_mean(pred, win)
    mu_y = _windowed_mean(gt, win)
    var_x = _windowed_mean(pred * pred, win) - mu_x**2
    var_y = _windowed_mean(gt * gt, win) - mu_y**2
    cov = _windowed_mean(pred * gt, win) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def bad_pixel_percent(pred: np.ndarray, gt: np.ndarray, threshold: float = 1.0) -> float:
    """Percentage of pixels with absolute error strictly above threshold."""
    pred, gt = _check_pair(pred, gt)
    return float(100.0 * np.count_nonzero(np.abs(pred - gt) > threshold) / pred.size)


@dataclass
class EvalReport:
    image_id: str
    rmse: float
    ssim: float
    bad_pixel_percent: float


def evaluate_pair(image_id: str, pred: np.ndarray, gt: np.ndarray,
                  dynamic_range: float = 255.0, bad_threshold: float = 1.0) -> EvalReport:
    return EvalReport(
        image_id=image_id,
        rmse=rmse(pred, gt),
        ssim=ssim(pred, gt, dynamic_range),
        bad_pixel_percent=bad_pixel_percent(pred, gt, bad_threshold),
    )


def write_report_csv(reports: list[EvalReport], path) -> None:
    """One row per image; fixed header id,rmse,ssim,bad_pct."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "rmse", "ssim", "bad_pct"])
        for r in sorted(reports, key=lambda r: r.image_id):
            writer.writerow([r.image_id, repr(r.rmse), repr(r.ssim), repr(r.bad_pixel_percent)])
