"""Seeded simulation of the three supported noise families.

* gaussian: additive, n ~ N(mean, var), signal-independent.
* awgn: additive Gaussian whose per-image variance is itself drawn once from
  N(loc, scale^2) and clamped to >= 0 (the distribution-over-variance
  reading of the loc/scale parameter pair).
* speckle: multiplicative, out = x + x*n with n ~ N(mean, var).

All normal fields come from the package Rng in row-major order, so a
(image, spec) pair fully determines the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imgcore import check_image, clip01
from .rng import Rng

FAMILIES = ("gaussian", "awgn", "speckle")

# Default parameter sets per family.
DEFAULT_PARAMS = {
    "gaussian": {"mean": 0.0, "var": 0.005},
    "awgn": {"loc": 0.01, "scale": 0.0001},
    "speckle": {"mean": 0.1, "var": 0.01},
}


def normal_field(rng: Rng, shape, mean: float, var: float) -> np.ndarray:
    """i.i.d. N(mean, var) field in row-major draw order.

    Exposed so tests can check signal independence at the field level: the
    same (rng state, shape, parameters) produce a bit-identical field no
    matter which image it is later combined with.
    """
    if var < 0:
        raise ValueError("var must be >= 0")
    z = rng.normals(shape[0] * shape[1]).reshape(shape)
    return mean + math.sqrt(var) * z


def add_gaussian(image, mean: float, var: float, rng: Rng,
                 clip: bool = True) -> np.ndarray:
    """Additive Gaussian noise, i.i.d. per pixel."""
    image = check_image(image)
    out = image + normal_field(rng, image.shape, mean, var)
    return clip01(out) if clip else out


def add_awgn(image, loc: float, scale: float, rng: Rng,
             clip: bool = True) -> np.ndarray:
    """Additive white Gaussian noise with a randomly drawn variance.

    One variance sigma^2 ~ N(loc, scale^2) is drawn per image and clamped to
    >= 0; scale == 0 consumes no draw so the degenerate case reproduces
    ``add_gaussian(mean=0, var=loc)`` exactly under the same seed.
    """
    image = check_image(image)
    if scale < 0:
        raise ValueError("scale must be >= 0")
    var = loc if scale == 0.0 else loc + scale * rng.normal()
    var = max(var, 0.0)
    out = image + normal_field(rng, image.shape, 0.0, var)
    return clip01(out) if clip else out


def add_speckle(image, mean: float, var: float, rng: Rng,
                clip: bool = True) -> np.ndarray:
    """Multiplicative noise: out = x + x*n, n ~ N(mean, var)."""
    image = check_image(image)
    n = normal_field(rng, image.shape, mean, var)
    out = image + image * n
    return clip01(out) if clip else out


@dataclass(frozen=True)
class NoiseSpec:
    """A noise family plus its parameters and seed; determines a corruption."""

    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; "
                             f"choose from {FAMILIES}")
        allowed = set(DEFAULT_PARAMS[self.family])
        extra = set(self.params) - allowed
        if extra:
            raise ValueError(f"{self.family} noise does not take parameters "
                             f"{sorted(extra)} (allowed: {sorted(allowed)})")
        merged = dict(DEFAULT_PARAMS[self.family], **self.params)
        for key in ("var", "scale"):
            if key in merged and merged[key] < 0:
                raise ValueError(f"{key} must be >= 0")
        object.__setattr__(self, "params", merged)

    def apply(self, image, rng: Rng | None = None) -> np.ndarray:
        """Corrupt `image`; a fresh Rng(seed) is used unless one is passed."""
        rng = rng if rng is not None else Rng(self.seed)
        p = self.params
        if self.family == "gaussian":
            return add_gaussian(image, p["mean"], p["var"], rng, self.clip)
        if self.family == "awgn":
            return add_awgn(image, p["loc"], p["scale"], rng, self.clip)
        return add_speckle(image, p["mean"], p["var"], rng, self.clip)
