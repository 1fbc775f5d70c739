"""Reference metrics: luma-channel PSNR and SSIM, plus the feature-distance
perceptual score, and the scale-sweep evaluation table."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PSNR_CAP_DB = 99.0
_BT601 = np.array([0.299, 0.587, 0.114])


def _luma(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected [3,H,W] image, got {x.shape}")
    return np.tensordot(_BT601, x, axes=1)


def psnr_y(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR on the BT.601 Y channel, [0,1] scale, capped at 99 dB."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((_luma(a) - _luma(b)) ** 2))
    if mse <= 10 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_y(a: np.ndarray, b: np.ndarray, win_size: int = 11, sigma: float = 1.5) -> float:
    """Single-scale SSIM on the Y channel, mean over valid window positions."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    ya, yb = _luma(a), _luma(b)
    if min(ya.shape) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} window")
    w = _gaussian_window(win_size, sigma)
    from numpy.lib.stride_tricks import sliding_window_view

    pa = sliding_window_view(ya, (win_size, win_size))
    pb = sliding_window_view(yb, (win_size, win_size))
    mu_a = np.einsum("ijkl,kl->ij", pa, w)
    mu_b = np.einsum("ijkl,kl->ij", pb, w)
    var_a = np.einsum("ijkl,kl->ij", pa**2, w) - mu_a**2
    var_b = np.einsum("ijkl,kl->ij", pb**2, w) - mu_b**2
    cov = np.einsum("ijkl,kl->ij", pa * pb, w) - mu_a * mu_b
    k1, k2 = 0.01, 0.03
    c1, c2 = k1**2, k2**2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(s.mean())


@dataclass
class MetricRow:
    lambda_pix: float
    lambda_sem: float
    psnr_y: float
    ssim_y: float
    perceptual: float
    n_images: int


CSV_FIELDS = ["lambda_pix", "lambda_sem", "psnr_y", "ssim_y", "perceptual", "n_images"]


def evaluate(lq: np.ndarray, hq: np.ndarray, bundle, scales: list[tuple[float, float]]):
    """Aggregate metrics per (lambda_pix, lambda_sem) setting over a paired set."""
    from .infer import GuidanceScales, build_cache, blend_from_cache
    from .losses import perceptual_loss

    rows = []
    caches = [build_cache(x, bundle) for x in lq]
    for lp, ls in scales:
        s = GuidanceScales(lp, ls)
        psnrs, ssims, percs = [], [], []
        for cache, x_hq in zip(caches, hq):
            out = blend_from_cache(cache, s, bundle)
            psnrs.append(psnr_y(out, x_hq))
            ssims.append(ssim_y(out, x_hq))
            percs.append(perceptual_loss(out, x_hq, bundle.featnet))
        rows.append(
            MetricRow(lp, ls, float(np.mean(psnrs)), float(np.mean(ssims)),
                      float(np.mean(percs)), len(lq))
        )
    return rows


def write_report(rows: list[MetricRow], path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_FIELDS)
        for r in rows:
            writer.writerow([r.lambda_pix, r.lambda_sem, f"{r.psnr_y:.6f}",
                             f"{r.ssim_y:.6f}", f"{r.perceptual:.6f}", r.n_images])
