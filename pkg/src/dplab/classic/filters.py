"""Neighborhood filters: mean, median, Gaussian, bilateral, local Wiener.

All filters use reflecting boundaries (mirror without repeating the edge
sample, i.e. numpy's 'reflect' padding).
"""

from __future__ import annotations

import math

import numpy as np

from ..imgcore import check_image


def _pad(img: np.ndarray, r: int) -> np.ndarray:
    return np.pad(img, r, mode="reflect")


def _windows(img: np.ndarray, radius: int) -> np.ndarray:
    """(h, w, k, k) view of all (2r+1)^2 neighborhoods, reflect-padded."""
    k = 2 * radius + 1
    padded = _pad(img, radius)
    return np.lib.stride_tricks.sliding_window_view(padded, (k, k))


def mean_filter(img, radius: int = 1) -> np.ndarray:
    """Each pixel becomes the arithmetic mean of its (2r+1)^2 neighborhood."""
    img = check_image(img)
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return _windows(img, radius).mean(axis=(2, 3))


def median_filter(img, radius: int = 1) -> np.ndarray:
    """Each pixel becomes the median of its (2r+1)^2 neighborhood."""
    img = check_image(img)
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return np.median(_windows(img, radius), axis=(2, 3))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalised 1-D Gaussian taps with half-width ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    half = int(math.ceil(3.0 * sigma))
    k = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return g / g.sum()


def _correlate1d(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    half = len(taps) // 2
    if axis == 0:
        padded = np.pad(img, ((half, half), (0, 0)), mode="reflect")
        out = np.zeros_like(img)
        for i, t in enumerate(taps):
            out += t * padded[i:i + img.shape[0], :]
    else:
        padded = np.pad(img, ((0, 0), (half, half)), mode="reflect")
        out = np.zeros_like(img)
        for i, t in enumerate(taps):
            out += t * padded[:, i:i + img.shape[1]]
    return out


def gaussian_filter(img, sigma: float = 1.0) -> np.ndarray:
    """Separable Gaussian smoothing with exactly unit DC gain."""
    img = check_image(img).astype(np.float64)
    taps = gaussian_kernel1d(sigma)
    return _correlate1d(_correlate1d(img, taps, axis=1), taps, axis=0)


def bilateral_filter(img, sigma_spatial: float = 2.0,
                     sigma_range: float = 0.1) -> np.ndarray:
    """Edge-preserving smoothing with joint spatial/intensity weights.

    out(p) = sum_q w(p,q) x(q) / sum_q w(p,q) over the (2h+1)^2 window with
    h = ceil(3*sigma_spatial), where w is the product of a spatial Gaussian
    in |p-q| and a range Gaussian in the intensity difference.
    """
    img = check_image(img).astype(np.float64)
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("sigma values must be > 0")
    half = int(math.ceil(3.0 * sigma_spatial))
    padded = _pad(img, half)
    h, w = img.shape
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    inv2ss = 1.0 / (2.0 * sigma_spatial * sigma_spatial)
    inv2sr = 1.0 / (2.0 * sigma_range * sigma_range)
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            shifted = padded[half + dy:half + dy + h, half + dx:half + dx + w]
            ws = math.exp(-(dy * dy + dx * dx) * inv2ss)
            wr = np.exp(-((img - shifted) ** 2) * inv2sr)
            weight = ws * wr
            num += weight * shifted
            den += weight
    return num / den


def wiener_filter(img, window: int = 5, sigma: float | None = None) -> np.ndarray:
    """Locally adaptive Wiener filter using window mean/variance statistics.

    out = mu + max(var_local - nu^2, 0) / max(var_local, nu^2) * (x - mu)
    with nu^2 the noise power (estimated from the image when not given).
    The gain lies in [0, 1], so output values stay within the local range.
    """
    img = check_image(img).astype(np.float64)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if sigma is None:
        from .wavelet import estimate_sigma
        sigma = estimate_sigma(img).sigma
    nu2 = sigma * sigma
    radius = window // 2
    win = _windows(img, radius)
    mu = win.mean(axis=(2, 3))
    var = win.var(axis=(2, 3))
    den = np.maximum(var, nu2)
    gain = np.where(den > 0, np.maximum(var - nu2, 0.0) / np.where(den > 0, den, 1.0), 0.0)
    return mu + gain * (img - mu)
