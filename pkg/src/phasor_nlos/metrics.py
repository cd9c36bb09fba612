"""Image and depth quality metrics with central cropping."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DegenerateCrop, EmptyMask, ShapeMismatch, TooSmall

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(ref, test):
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise ShapeMismatch(f"image shapes differ: {ref.shape} vs {test.shape}")
    return ref, test


def center_crop(img, fraction: float = 0.75):
    """Centered window of side ``round(fraction * n)`` per axis.

    When the leftover margin is odd the extra row/column is dropped on the
    high-index side.
    """
    img = np.asarray(img)
    if img.ndim < 2 or min(img.shape[:2]) < 2:
        raise DegenerateCrop(f"image {img.shape} is smaller than 2x2")
    if not 0 < fraction <= 1:
        raise DegenerateCrop(f"crop fraction must lie in (0, 1], got {fraction}")
    slices = []
    for n in img.shape[:2]:
        side = math.floor(fraction * n + 0.5)
        if side < 1:
            raise DegenerateCrop(f"fraction {fraction} leaves no pixels on an axis of {n}")
        start = (n - side) // 2
        slices.append(slice(start, start + side))
    return img[tuple(slices)]


def psnr(ref, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    ref, test = _pair(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(peak**2 / mse)


def capped(db: float) -> float:
    return min(db, PSNR_CAP_DB)


def _ssim_terms(ref, test, peak=1.0):
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    truncate = (SSIM_WINDOW // 2) / SSIM_SIGMA

    def blur(a):
        return gaussian_filter(a, SSIM_SIGMA, truncate=truncate, mode="reflect")

    mx, my = blur(ref), blur(test)
    vx = blur(ref * ref) - mx * mx
    vy = blur(test * test) - my * my
    cxy = blur(ref * test) - mx * my
    luminance = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    contrast_structure = (2 * cxy + c2) / (vx + vy + c2)
    pad = SSIM_WINDOW // 2
    inner = (slice(pad, -pad),) * 2
    return luminance[inner], contrast_structure[inner]


def ssim(ref, test) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) and peak 1.

    Border pixels whose window would leave the image are excluded.
    """
    ref, test = _pair(ref, test)
    if ref.ndim != 2 or min(ref.shape) < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs a 2-D image of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {ref.shape}")
    lum, cs = _ssim_terms(ref, test)
    return float(np.mean(lum * cs))


def depth_errors(d_ref, d_hat, valid_mask=None) -> tuple[float, float]:
    """(RMSE, MAD) in meters over the supervised pixels."""
    d_ref, d_hat = _pair(d_ref, d_hat)
    mask = np.ones(d_ref.shape, bool) if valid_mask is None else np.asarray(valid_mask, bool)
    if mask.shape != d_ref.shape:
        raise ShapeMismatch(f"mask shape {mask.shape} vs depth {d_ref.shape}")
    if not mask.any():
        raise EmptyMask("depth mask selects no pixels")
    err = (d_ref - d_hat)[mask]
    return float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err)))


def depth_mask(gt_intensity, floor: float = 1e-3) -> np.ndarray:
    return np.asarray(gt_intensity) >= floor


def evaluate(pred_i, gt_i, pred_d, gt_d, crop: float = 0.75) -> dict:
    """All four metrics on center-cropped images."""
    _pair(pred_i, gt_i)
    _pair(pred_d, gt_d)
    _pair(pred_i, pred_d)
    pi, gi, pd, gd = (center_crop(a, crop) for a in (pred_i, gt_i, pred_d, gt_d))
    rmse, mad = depth_errors(gd, pd, depth_mask(gi))
    return {"psnr": psnr(gi, pi), "ssim": ssim(gi, pi), "rmse": rmse, "mad": mad}
