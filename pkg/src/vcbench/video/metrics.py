"""Full-reference image quality metrics on 8-bit luma planes."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateReference, DimensionMismatch, FrameTooSmall

PSNR_CAP = 100.0
MAX_VALUE = 255.0
SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_C1 = (SSIM_K1 * MAX_VALUE) ** 2
SSIM_C2 = (SSIM_K2 * MAX_VALUE) ** 2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
VIF_SIGMA_NSQ = 2.0
VIF_EPS = 1e-10
VIF_SCALES = 4


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable weighted window sum over every fully-contained window position."""
    n = len(taps)
    out = sliding_window_view(img, n, axis=0) @ taps
    return sliding_window_view(out, n, axis=1) @ taps


def _luma(frame) -> np.ndarray:
    return np.asarray(getattr(frame, "luma", frame), dtype=np.float64)


def _pair(ref, deg, min_size: int = 1):
    a, b = _luma(ref), _luma(deg)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if min(a.shape) < min_size:
        raise FrameTooSmall(f"{a.shape} is smaller than {min_size}x{min_size}")
    return a, b


def psnr(ref, deg) -> float:
    a, b = _pair(ref, deg)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * math.log10(MAX_VALUE ** 2 / mse))


def _ssim_maps(a: np.ndarray, b: np.ndarray, taps: np.ndarray):
    mu_a = filter_valid(a, taps)
    mu_b = filter_valid(b, taps)
    var_a = filter_valid(a * a, taps) - mu_a ** 2
    var_b = filter_valid(b * b, taps) - mu_b ** 2
    cov = filter_valid(a * b, taps) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + SSIM_C1) / (mu_a ** 2 + mu_b ** 2 + SSIM_C1)
    cs = (2 * cov + SSIM_C2) / (var_a + var_b + SSIM_C2)
    return lum, cs


_SSIM_TAPS = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def ssim(ref, deg) -> float:
    """Mean SSIM index, 11x11 Gaussian window (sigma 1.5), no padding."""
    a, b = _pair(ref, deg, SSIM_WINDOW)
    lum, cs = _ssim_maps(a, b, _SSIM_TAPS)
    return float(np.mean(lum * cs))


def contrast_structure(ref, deg) -> float:
    a, b = _pair(ref, deg, SSIM_WINDOW)
    return float(np.mean(_ssim_maps(a, b, _SSIM_TAPS)[1]))


def downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 mean followed by decimation; an odd trailing row/column is dropped."""
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    return img[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(ref, deg) -> float:
    """Five-scale SSIM.

    Contrast-structure means are taken at every scale and the full SSIM mean
    at the coarsest one.  Negative per-scale terms are clipped to zero so the
    fractional exponents stay real.
    """
    levels = len(MS_SSIM_WEIGHTS)
    a, b = _pair(ref, deg, SSIM_WINDOW * 2 ** (levels - 1))
    score = 1.0
    for level, weight in enumerate(MS_SSIM_WEIGHTS):
        lum, cs = _ssim_maps(a, b, _SSIM_TAPS)
        term = np.mean(lum * cs) if level == levels - 1 else np.mean(cs)
        score *= max(float(term), 0.0) ** weight
        if level < levels - 1:
            a, b = downsample2(a), downsample2(b)
    return score


def vifp(ref, deg) -> float:
    """Pixel-domain visual information fidelity over four scales.

    Between scales both images are low-passed with the next scale's window
    and decimated by two.
    """
    a, b = _pair(ref, deg, 64)
    num = den = 0.0
    for scale in range(1, VIF_SCALES + 1):
        size = 2 ** (VIF_SCALES - scale + 1) + 1
        taps = gaussian_window(size, size / 5)
        if scale > 1:
            a = filter_valid(a, taps)[::2, ::2]
            b = filter_valid(b, taps)[::2, ::2]
        # centring leaves local moments unchanged and keeps flat planes exactly flat
        ca, cb = a - a.mean(), b - b.mean()
        mu_a = filter_valid(ca, taps)
        mu_b = filter_valid(cb, taps)
        var_a = np.maximum(filter_valid(ca * ca, taps) - mu_a ** 2, 0)
        var_b = np.maximum(filter_valid(cb * cb, taps) - mu_b ** 2, 0)
        cov = filter_valid(ca * cb, taps) - mu_a * mu_b
        gain = cov / (var_a + VIF_EPS)
        var_v = np.maximum(var_b - gain * cov, 0)
        num += float(np.sum(np.log(1 + gain ** 2 * var_a / (var_v + VIF_SIGMA_NSQ))))
        den += float(np.sum(np.log(1 + var_a / VIF_SIGMA_NSQ)))
    if den == 0:
        raise DegenerateReference("reference has no variance at any scale")
    return num / den


METRICS = {
    "psnr": psnr,
    "ssim": ssim,
    "msssim": ms_ssim,
    "vifp": vifp,
}
METRIC_ALIASES = {"ms-ssim": "msssim", "ms_ssim": "msssim", "vif": "vifp"}


def metric_function(name: str):
    key = METRIC_ALIASES.get(name.lower(), name.lower())
    if key not in METRICS:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(METRICS)}")
    return key, METRICS[key]
