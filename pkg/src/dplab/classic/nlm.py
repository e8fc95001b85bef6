"""Non-local means: patch-similarity weighted averaging over a search window.

The weight of candidate q for pixel p is
    w(p,q) = exp(-max(d2(p,q) - 2*sigma^2, 0) / h^2)
where d2 is the mean squared difference of the (2r+1)^2 patches around p and
q (reflect boundary) and the noise-compensation term discounts the distance
expected between two noisy copies of the same patch. The center q = p enters
as an ordinary term with weight 1.

`nlm` sweeps window offsets with vectorised box-filtered distances; `nlm_ref`
is the literal per-pixel definition kept as the correctness oracle.
"""

from __future__ import annotations

import math

import numpy as np

from ..imgcore import check_image


def _resolve_h(img, h, sigma):
    from .wavelet import estimate_sigma
    if sigma is None:
        sigma = estimate_sigma(img).sigma
    if h is None:
        h = 0.8 * sigma
    if h <= 0:
        h = 1e-8  # degenerate: only exact-duplicate patches keep weight
    return h, sigma


def _box_mean_valid(img: np.ndarray, k: int) -> np.ndarray:
    """Valid-mode k*k box mean via two 1-D passes."""
    h, w = img.shape
    out = np.zeros((h, w - k + 1))
    for i in range(k):
        out += img[:, i:i + w - k + 1]
    out2 = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        out2 += out[i:i + h - k + 1, :]
    return out2 / (k * k)


def nlm(img, patch_radius: int = 3, search_radius: int = 10,
        h: float | None = None, sigma: float | None = None) -> np.ndarray:
    img = check_image(img).astype(np.float64)
    h, sigma = _resolve_h(img, h, sigma)
    r, rs = patch_radius, search_radius
    rows, cols = img.shape
    padded = np.pad(img, r, mode="reflect")
    inv_h2 = 1.0 / (h * h)
    two_s2 = 2.0 * sigma * sigma

    num = np.zeros_like(img)
    den = np.zeros_like(img)
    k = 2 * r + 1
    for dy in range(-rs, rs + 1):
        # rows p with p+dy inside the image
        y0, y1 = max(0, -dy), min(rows, rows - dy)
        if y0 >= y1:
            continue
        for dx in range(-rs, rs + 1):
            x0, x1 = max(0, -dx), min(cols, cols - dx)
            if x0 >= x1:
                continue
            a = padded[y0:y1 + 2 * r, x0:x1 + 2 * r]
            b = padded[y0 + dy:y1 + dy + 2 * r, x0 + dx:x1 + dx + 2 * r]
            d2 = _box_mean_valid((a - b) ** 2, k)
            w = np.exp(-np.maximum(d2 - two_s2, 0.0) * inv_h2)
            num[y0:y1, x0:x1] += w * img[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
            den[y0:y1, x0:x1] += w
    return num / den


def nlm_ref(img, patch_radius: int = 3, search_radius: int = 10,
            h: float | None = None, sigma: float | None = None) -> np.ndarray:
    """Brute-force reference: explicit loops over pixels and candidates."""
    img = check_image(img).astype(np.float64)
    h, sigma = _resolve_h(img, h, sigma)
    r, rs = patch_radius, search_radius
    rows, cols = img.shape
    padded = np.pad(img, r, mode="reflect")
    inv_h2 = 1.0 / (h * h)
    two_s2 = 2.0 * sigma * sigma
    npx = (2 * r + 1) ** 2

    out = np.zeros_like(img)
    for py in range(rows):
        for px in range(cols):
            ref_patch = padded[py:py + 2 * r + 1, px:px + 2 * r + 1]
            num = 0.0
            den = 0.0
            for qy in range(max(0, py - rs), min(rows, py + rs + 1)):
                for qx in range(max(0, px - rs), min(cols, px + rs + 1)):
                    cand = padded[qy:qy + 2 * r + 1, qx:qx + 2 * r + 1]
                    d2 = float(np.sum((ref_patch - cand) ** 2)) / npx
                    w = math.exp(-max(d2 - two_s2, 0.0) * inv_h2)
                    num += w * img[qy, qx]
                    den += w
            out[py, px] = num / den
    return out
