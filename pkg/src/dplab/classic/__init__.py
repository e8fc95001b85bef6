"""Classical denoising baselines and the name registry the CLI uses."""

from __future__ import annotations

import numpy as np

from .bm3d import Bm3dParams, bm3d
from .filters import (bilateral_filter, gaussian_filter, mean_filter,
                      median_filter, wiener_filter)
from .nlm import nlm, nlm_ref
from .wavelet import SigmaEstimate, estimate_sigma, wavelet_denoise

__all__ = [
    "Bm3dParams", "SigmaEstimate", "bilateral_filter", "bm3d",
    "estimate_sigma", "gaussian_filter", "mean_filter", "median_filter",
    "nlm", "nlm_ref", "wavelet_denoise", "wiener_filter", "FILTERS",
    "run_filter",
]


def _run_mean(img, sigma=None, radius=1):
    return mean_filter(img, radius=int(radius))


def _run_median(img, sigma=None, radius=1):
    return median_filter(img, radius=int(radius))


def _run_gaussian(img, sigma=None, gaussian_sigma=1.0):
    return gaussian_filter(img, sigma=float(gaussian_sigma))


def _run_bilateral(img, sigma=None, sigma_spatial=2.0, sigma_range=0.1):
    return bilateral_filter(img, float(sigma_spatial), float(sigma_range))


def _run_wavelet_b(img, sigma=None, levels=3):
    return wavelet_denoise(img, mode="B", levels=int(levels), sigma=sigma)


def _run_wavelet_v(img, sigma=None, levels=3):
    return wavelet_denoise(img, mode="V", levels=int(levels), sigma=sigma)


def _run_wiener(img, sigma=None, window=5):
    return wiener_filter(img, window=int(window), sigma=sigma)


def _run_nlm(img, sigma=None, patch_radius=3, search_radius=10, h=None):
    return nlm(img, patch_radius=int(patch_radius),
               search_radius=int(search_radius),
               h=None if h is None else float(h), sigma=sigma)


def _run_bm3d(img, sigma=None, **overrides):
    if sigma is None:
        sigma = estimate_sigma(img).sigma
    defaults = Bm3dParams()
    unknown = [k for k in overrides if not hasattr(defaults, k)]
    if unknown:
        raise ValueError(f"unknown bm3d parameters {unknown}")
    params = Bm3dParams(**{k: type(getattr(defaults, k))(v)
                           for k, v in overrides.items()})
    return bm3d(img, sigma=float(sigma), params=params)


# Registry keyed by the CLI algorithm names.
FILTERS = {
    "mean": _run_mean,
    "median": _run_median,
    "gaussian": _run_gaussian,
    "bilateral": _run_bilateral,
    "wavelet_b": _run_wavelet_b,
    "wavelet_v": _run_wavelet_v,
    "wiener": _run_wiener,
    "nlm": _run_nlm,
    "bm3d": _run_bm3d,
}


def run_filter(name: str, img: np.ndarray, sigma: float | None = None,
               **params) -> np.ndarray:
    """Apply a registered filter by name with keyword overrides."""
    if name not in FILTERS:
        raise KeyError(f"unknown algorithm {name!r}; valid names: "
                       f"{', '.join(sorted(FILTERS))}")
    return FILTERS[name](img, sigma=sigma, **params)
