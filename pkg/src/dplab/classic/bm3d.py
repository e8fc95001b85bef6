"""Two-stage block-matching collaborative filtering.

Stage 1 groups similar 8x8 blocks, takes a 2-D DCT per block plus a 1-D Haar
transform across the group axis, hard-thresholds the 3-D coefficients at
lambda_3d * sigma, and aggregates overlapping estimates with weights
1/(sigma^2 * n_retained). Stage 2 re-matches on the stage-1 estimate and
applies empirical Wiener shrinkage W = B^2/(B^2 + sigma^2) to the noisy
group's coefficients, aggregating with weights 1/(sigma^2 * sum(W^2)).

Reference blocks walk a fixed row-major step grid (edge positions clamped to
the image bounds) and candidate ties sort by row-major position, so the
output is bit-deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..imgcore import check_image, clip01


@dataclass(frozen=True)
class Bm3dParams:
    block: int = 8
    step: int = 4
    search_radius: int = 19
    max_group: int = 16
    match_threshold_ht: float = 0.085
    match_threshold_wie: float = 0.025
    lambda_3d: float = 2.7

    def __post_init__(self):
        if self.max_group not in (1, 2, 4, 8, 16):
            raise ValueError("max_group must be a power of two in [1, 16]")
        if self.block < 2 or self.step < 1 or self.search_radius < 1:
            raise ValueError("invalid block/step/search_radius")


def _dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    t = np.cos(np.pi * (2 * m + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    t[0, :] = math.sqrt(1.0 / n)
    return t


def _haar_group(x: np.ndarray) -> np.ndarray:
    """Full orthonormal Haar decomposition along axis 0 (power-of-two length)."""
    out = x.copy()
    m = out.shape[0]
    while m > 1:
        a = (out[0:m:2] + out[1:m:2]) / math.sqrt(2.0)
        d = (out[0:m:2] - out[1:m:2]) / math.sqrt(2.0)
        out[:m // 2] = a
        out[m // 2:m] = d
        m //= 2
    return out


def _ihaar_group(x: np.ndarray) -> np.ndarray:
    out = x.copy()
    n = out.shape[0]
    m = 2
    while m <= n:
        a = out[:m // 2].copy()
        d = out[m // 2:m].copy()
        out[0:m:2] = (a + d) / math.sqrt(2.0)
        out[1:m:2] = (a - d) / math.sqrt(2.0)
        m *= 2
    return out


def _grid(extent: int, block: int, step: int) -> list:
    last = extent - block
    positions = list(range(0, last + 1, step))
    if positions[-1] != last:
        positions.append(last)
    return positions


def _match(win: np.ndarray, ref_pos: tuple, search_radius: int,
           threshold: float, max_group: int):
    """Positions of the best-matching blocks around `ref_pos` (ref first)."""
    ny, nx = win.shape[:2]
    ry, rx = ref_pos
    y0, y1 = max(0, ry - search_radius), min(ny - 1, ry + search_radius)
    x0, x1 = max(0, rx - search_radius), min(nx - 1, rx + search_radius)
    ref = win[ry, rx]
    diff = win[y0:y1 + 1, x0:x1 + 1] - ref
    d2 = np.mean(diff * diff, axis=(2, 3)).ravel()
    order = np.argsort(d2, kind="stable")
    width = x1 - x0 + 1
    ref_flat = (ry - y0) * width + (rx - x0)
    positions = [(ry, rx)]
    for idx in order:
        if len(positions) >= max_group:
            break
        if idx == ref_flat or d2[idx] > threshold:
            continue
        positions.append((y0 + idx // width, x0 + idx % width))
    count = 1 << (len(positions).bit_length() - 1)  # largest power of two
    return positions[:count]


def bm3d(img, sigma: float, params: Bm3dParams = Bm3dParams()) -> np.ndarray:
    img = check_image(img).astype(np.float64)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    bs = params.block
    if min(img.shape) < 2 * bs:
        raise ValueError(f"image sides must be >= {2 * bs}")
    t2d = _dct_matrix(bs)
    refs = [(y, x) for y in _grid(img.shape[0], bs, params.step)
            for x in _grid(img.shape[1], bs, params.step)]

    basic = _stage_ht(img, sigma, params, t2d, refs)
    return clip01(_stage_wiener(img, basic, sigma, params, t2d, refs))


def _stage_ht(img, sigma, params, t2d, refs):
    bs = params.block
    win = np.lib.stride_tricks.sliding_window_view(img, (bs, bs))
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    thr = params.lambda_3d * sigma
    inv_s2 = 1.0 / (sigma * sigma)
    for ref_pos in refs:
        positions = _match(win, ref_pos, params.search_radius,
                           params.match_threshold_ht, params.max_group)
        group = np.stack([win[p] for p in positions])
        coefs = _haar_group(np.einsum("ij,njk,lk->nil", t2d, group, t2d))
        mask = np.abs(coefs) >= thr
        mask[0, 0, 0] = True  # keep the group/block DC
        coefs *= mask
        n_ret = int(np.count_nonzero(coefs))
        weight = inv_s2 / n_ret if n_ret > 0 else inv_s2
        blocks = np.einsum("ji,njk,kl->nil", t2d, _ihaar_group(coefs), t2d)
        for (qy, qx), block in zip(positions, blocks):
            num[qy:qy + bs, qx:qx + bs] += weight * block
            den[qy:qy + bs, qx:qx + bs] += weight
    assert den.min() > 0, "step grid must cover every pixel"
    return num / den


def _stage_wiener(img, basic, sigma, params, t2d, refs):
    bs = params.block
    win_basic = np.lib.stride_tricks.sliding_window_view(basic, (bs, bs))
    win_noisy = np.lib.stride_tricks.sliding_window_view(img, (bs, bs))
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    s2 = sigma * sigma
    inv_s2 = 1.0 / s2
    for ref_pos in refs:
        positions = _match(win_basic, ref_pos, params.search_radius,
                           params.match_threshold_wie, params.max_group)
        group_b = np.stack([win_basic[p] for p in positions])
        group_n = np.stack([win_noisy[p] for p in positions])
        coefs_b = _haar_group(np.einsum("ij,njk,lk->nil", t2d, group_b, t2d))
        coefs_n = _haar_group(np.einsum("ij,njk,lk->nil", t2d, group_n, t2d))
        shrink = coefs_b * coefs_b
        shrink = shrink / (shrink + s2)
        wsum = float(np.sum(shrink * shrink))
        weight = inv_s2 / wsum if wsum > 0 else inv_s2
        blocks = np.einsum("ji,njk,kl->nil", t2d, _ihaar_group(coefs_n * shrink), t2d)
        for (qy, qx), block in zip(positions, blocks):
            num[qy:qy + bs, qx:qx + bs] += weight * block
            den[qy:qy + bs, qx:qx + bs] += weight
    assert den.min() > 0
    return num / den
