"""Image representation, bit-exact file I/O, phantom generation, splits.

Images are 2-D float64 numpy arrays of shape (height, width) holding
intensities with nominal range [0, 1]. Two on-disk formats are supported:

* binary PGM ("P5", maxval 255) for 8-bit interchange and previews;
* DPLF, a minimal lossless float32 container: magic ``DPLF``, one version
  byte (0x01), width and height as unsigned 32-bit little-endian, then
  width*height IEEE-754 float32 little-endian values, row-major from the
  top-left corner.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .rng import Rng

MAX_SIDE = 8192

_DPLF_MAGIC = b"DPLF"
_DPLF_VERSION = 1


class FormatError(ValueError):
    """Raised for malformed image files."""


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate the array-as-image contract and return the array."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    h, w = img.shape
    if h < 1 or w < 1 or h > MAX_SIDE or w > MAX_SIDE:
        raise ValueError(f"image sides must be in [1, {MAX_SIDE}], got {w}x{h}")
    return img


def clip01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PGM (binary P5, maxval 255)
# ---------------------------------------------------------------------------

def _read_pgm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # whitespace and '#' comments separate header tokens
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return buf[start:pos], pos


def load_pgm(path) -> np.ndarray:
    """Load a binary PGM file, mapping 8-bit values to [0,1] by v/255."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:2] != b"P5":
        raise FormatError("not a binary PGM file (magic must be 'P5')")
    pos = 2
    try:
        wtok, pos = _read_pgm_token(buf, pos)
        htok, pos = _read_pgm_token(buf, pos)
        mtok, pos = _read_pgm_token(buf, pos)
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except (ValueError, FormatError) as e:
        raise FormatError(f"malformed PGM header: {e}") from e
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval} (must be 255)")
    if not (1 <= width <= MAX_SIDE and 1 <= height <= MAX_SIDE):
        raise FormatError(f"bad PGM dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    payload = buf[pos:pos + width * height]
    if len(payload) != width * height:
        raise IOError(f"truncated PGM payload in {path}")
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return data.reshape(height, width)


def save_pgm(img: np.ndarray, path) -> None:
    """Write a binary PGM; quantisation rounds half away from zero."""
    img = check_image(img)
    h, w = img.shape
    v = img * 255.0
    q = np.sign(v) * np.floor(np.abs(v) + 0.5)
    q = np.clip(q, 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


# ---------------------------------------------------------------------------
# DPLF (lossless float32 raster)
# ---------------------------------------------------------------------------

def load_raw(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(13)
        if len(header) < 13:
            raise FormatError("truncated DPLF header")
        if header[:4] != _DPLF_MAGIC:
            raise FormatError("bad DPLF magic")
        if header[4] != _DPLF_VERSION:
            raise FormatError(f"unsupported DPLF version {header[4]}")
        width, height = struct.unpack("<II", header[5:13])
        if not (1 <= width <= MAX_SIDE and 1 <= height <= MAX_SIDE):
            raise FormatError(f"bad DPLF dimensions {width}x{height}")
        payload = f.read(4 * width * height + 1)
    if len(payload) != 4 * width * height:
        raise FormatError(f"DPLF payload size mismatch in {path}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return data.reshape(height, width)


def save_raw(img: np.ndarray, path) -> None:
    img = check_image(img)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(_DPLF_MAGIC)
        f.write(bytes([_DPLF_VERSION]))
        f.write(struct.pack("<II", w, h))
        f.write(img.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Synthetic phantoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for a synthetic test image; generation is a pure function."""

    size: int = 128
    ellipse_count: int = 3
    texture_amplitude: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.size <= MAX_SIDE):
            raise ValueError(f"size must be in [1, {MAX_SIDE}]")
        if self.ellipse_count < 1:
            raise ValueError("ellipse_count must be >= 1")
        if not (0.0 <= self.texture_amplitude <= 0.3):
            raise ValueError("texture_amplitude must be in [0, 0.3]")


_BACKGROUND = 0.05
_TEXTURE_WAVES = 8


def gen_phantom(spec: PhantomSpec) -> np.ndarray:
    """Deterministic structured test image.

    Composition, painted in order: dark background, a horizontal intensity
    ramp band near the bottom, `ellipse_count` filled ellipses with random
    geometry and intensities in [0.2, 0.95], and a band-limited sinusoidal
    texture scaled to `texture_amplitude`. Clipped to [0, 1] at the end.
    """
    rng = Rng(spec.seed)
    n = spec.size
    img = np.full((n, n), _BACKGROUND)

    # ramp band: rows [0.85n, 0.95n), values sweeping 0.1 -> 0.9 left to right
    r0 = max(0, int(0.85 * n))
    r1 = max(r0 + 1, int(0.95 * n))
    img[r0:r1, :] = np.linspace(0.1, 0.9, n)[None, :]

    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    for _ in range(spec.ellipse_count):
        cx = rng.uniform() * n
        cy = rng.uniform() * (r0 if r0 > 0 else n)  # keep centers off the ramp
        a = (0.10 + 0.20 * rng.uniform()) * n
        b = (0.10 + 0.20 * rng.uniform()) * n
        theta = rng.uniform() * math.pi
        value = 0.2 + 0.75 * rng.uniform()
        ct, st = math.cos(theta), math.sin(theta)
        u = (xx - cx) * ct + (yy - cy) * st
        v = -(xx - cx) * st + (yy - cy) * ct
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] = value

    if spec.texture_amplitude > 0.0:
        # sum of a few random plane waves, wavelengths ~4..16 px
        tex = np.zeros((n, n))
        for _ in range(_TEXTURE_WAVES):
            freq = 1.0 / (4.0 + 12.0 * rng.uniform())
            angle = rng.uniform() * 2.0 * math.pi
            phase = rng.uniform() * 2.0 * math.pi
            fx, fy = freq * math.cos(angle), freq * math.sin(angle)
            tex += np.sin(2.0 * math.pi * (fx * xx + fy * yy) + phase)
        peak = np.max(np.abs(tex))
        if peak > 0:
            img += tex * (spec.texture_amplitude / peak)

    return clip01(img)


# ---------------------------------------------------------------------------
# Dataset split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    val: tuple


def split_dataset(ids, ratio: float, seed: int) -> DatasetSplit:
    """Deterministic shuffled split; `ratio` is the train fraction.

    The validation set receives round(len(ids) * (1 - ratio)) items, rounding
    half up, so 10 ids at ratio 0.8 give an 8/2 split and a single id stays
    in training.
    """
    ids = list(ids)
    if not ids:
        raise ValueError("ids must be non-empty")
    if not (0.0 < ratio < 1.0):
        raise ValueError("ratio must be in (0, 1)")
    rng = Rng(seed)
    order = list(ids)
    rng.shuffle(order)
    n_val = int(math.floor(len(order) * (1.0 - ratio) + 0.5))
    return DatasetSplit(train=tuple(order[n_val:]), val=tuple(order[:n_val]))
