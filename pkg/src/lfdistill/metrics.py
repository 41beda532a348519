"""Image quality metrics on float images in [0, 1]."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigError, UsageError

LUMA = np.array([0.299, 0.587, 0.114])


def psnr(a, b):
    """PSNR in dB over all pixels and channels jointly; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape and b.ndim != 0:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean(np.square(a - b))
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _filter(img, g):
    # valid-region separable filtering
    out = correlate1d(img, g, axis=0, mode="constant")
    out = correlate1d(out, g, axis=1, mode="constant")
    r = len(g) // 2
    return out[r:-r, r:-r]


def to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    return img @ LUMA if img.ndim == 3 else img


def ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean SSIM over the valid region of an 11x11 Gaussian window, on luminance."""
    a, b = to_gray(a), to_gray(b)
    if a.shape != b.shape:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise UsageError(f"image {a.shape} smaller than the {window}x{window} window")
    g = gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = _filter(a, g), _filter(b, g)
    var_a = _filter(a * a, g) - mu_a ** 2
    var_b = _filter(b * b, g) - mu_b ** 2
    cov = _filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
