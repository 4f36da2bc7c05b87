"""Objective image quality metrics on luminance planes: PSNR and SSIM.

Conventions: PSNR uses a fixed peak of 255. SSIM is the single-scale
index with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
L=255, averaged over window positions that lie fully inside the image.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

# ITU-R BT.601 studio-swing luma weights for 8-bit RGB.
_LUMA_WEIGHTS = np.array([65.481, 128.553, 24.966]) / 255.0
_LUMA_OFFSET = 16.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    image_id: str
    method: str
    qf: int
    psnr_db: float
    ssim: float
    crop_border: int = 0


def to_luma(rgb):
    """8-bit RGB image (h, w, 3) to the BT.601 studio-swing Y plane.

    Output values land in [16, 235] before rounding; returned as uint8.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB, got shape {rgb.shape}")
    y = _LUMA_OFFSET + rgb.astype(np.float64) @ _LUMA_WEIGHTS
    return np.floor(y + 0.5).astype(np.uint8)


def _as_plane_pair(a, b, crop):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError(f"expected 2-D planes, got shape {a.shape}")
    if crop:
        if 2 * crop >= min(a.shape):
            raise ValueError(f"crop {crop} leaves no pixels for shape {a.shape}")
        a = a[crop:-crop, crop:-crop]
        b = b[crop:-crop, crop:-crop]
    return a, b


def psnr(a, b, crop=0):
    """Peak signal-to-noise ratio in dB, peak 255. Identical inputs give inf."""
    a, b = _as_plane_pair(a, b, crop)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img, kernel1d):
    """Separable valid-mode correlation with a symmetric 1-D kernel."""
    win = len(kernel1d)
    v = np.lib.stride_tricks.sliding_window_view(img, win, axis=1) @ kernel1d
    v = np.lib.stride_tricks.sliding_window_view(v, win, axis=0) @ kernel1d
    return v


def ssim(a, b, crop=0):
    """Structural similarity index over valid 11x11 Gaussian windows."""
    a, b = _as_plane_pair(a, b, crop)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    w = _gaussian_window()
    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2

    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a**2
    var_b = _filter_valid(b * b, w) - mu_b**2
    cov = _filter_valid(a * b, w) - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def evaluate_pair(ref, test, image_id="", method="", qf=0, crop=2):
    """PSNR + SSIM report for one image pair at a common border crop."""
    return MetricReport(
        image_id=image_id,
        method=method,
        qf=qf,
        psnr_db=psnr(ref, test, crop),
        ssim=ssim(ref, test, crop),
        crop_border=crop,
    )


def write_metric_csv(path, reports):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "method", "qf", "psnr_db", "ssim", "crop"])
        for r in reports:
            writer.writerow(
                [r.image_id, r.method, r.qf, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}", r.crop_border]
            )
