"""DPLW parameter container: ordered named float32 arrays.

Layout: magic ``DPLW``, one version byte (0x01), then for each tensor in
registration order: name length (u32 LE), name bytes (utf-8), rank (u32 LE),
`rank` dims (u32 LE each), then the float32 little-endian payload. The file
ends after the last tensor.
"""

from __future__ import annotations

import struct

import numpy as np

from ..imgcore import FormatError
from .tensor import Tensor

_MAGIC = b"DPLW"
_VERSION = 1


def save_checkpoint(params: dict, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(bytes([_VERSION]))
        for name, value in params.items():
            data = value.data if isinstance(value, Tensor) else np.asarray(value)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                f.write(struct.pack("<I", dim))
            f.write(data.astype("<f4").tobytes())


def load_checkpoint(path) -> dict:
    """Read back name -> float64 array (float32 values), preserving order."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise FormatError("bad DPLW magic")
    if len(blob) < 5 or blob[4] != _VERSION:
        raise FormatError("unsupported DPLW version")
    pos = 5
    out = {}
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise FormatError("truncated DPLW entry header")
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = 1
        for d in dims:
            count *= d
        payload = blob[pos:pos + 4 * count]
        if len(payload) != 4 * count:
            raise FormatError(f"truncated DPLW payload for {name!r}")
        pos += 4 * count
        out[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    return out
