"""Plain encoder-decoder U-Net built from the tensor ops.

Per stage the encoder applies two padded 3x3 conv+relu blocks and a 2x2 max
pool, doubling the channel count from `base_channels`. The decoder mirrors
it with transposed 2x2 convolutions and skip concatenations (skip first,
upsampled second), and a final 1x1 convolution maps to a single output
channel with no activation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import Rng
from .tensor import (Tensor, concat_channels, conv1x1, conv2d, maxpool2,
                     relu, upconv2)


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 1
    depth: int = 2
    base_channels: int = 16

    def __post_init__(self):
        if self.in_channels not in (1, 2):
            raise ValueError("in_channels must be 1 or 2")
        if self.depth < 1 or self.base_channels < 1:
            raise ValueError("depth and base_channels must be >= 1")

    @property
    def out_channels(self) -> int:
        return 1


def param_shapes(cfg: UNetConfig) -> list:
    """Deterministic registration order of (name, shape) pairs."""
    shapes = []
    ch_in = cfg.in_channels
    for i in range(cfg.depth):
        ch = cfg.base_channels * (1 << i)
        shapes.append((f"enc{i}.conv1.weight", (ch, ch_in, 3, 3)))
        shapes.append((f"enc{i}.conv1.bias", (ch,)))
        shapes.append((f"enc{i}.conv2.weight", (ch, ch, 3, 3)))
        shapes.append((f"enc{i}.conv2.bias", (ch,)))
        ch_in = ch
    mid = cfg.base_channels * (1 << cfg.depth)
    shapes.append(("mid.conv1.weight", (mid, ch_in, 3, 3)))
    shapes.append(("mid.conv1.bias", (mid,)))
    shapes.append(("mid.conv2.weight", (mid, mid, 3, 3)))
    shapes.append(("mid.conv2.bias", (mid,)))
    ch_in = mid
    for i in reversed(range(cfg.depth)):
        ch = cfg.base_channels * (1 << i)
        shapes.append((f"dec{i}.up.weight", (ch_in, ch, 2, 2)))
        shapes.append((f"dec{i}.up.bias", (ch,)))
        shapes.append((f"dec{i}.conv1.weight", (ch, 2 * ch, 3, 3)))
        shapes.append((f"dec{i}.conv1.bias", (ch,)))
        shapes.append((f"dec{i}.conv2.weight", (ch, ch, 3, 3)))
        shapes.append((f"dec{i}.conv2.bias", (ch,)))
        ch_in = ch
    shapes.append(("out.weight", (1, cfg.base_channels)))
    shapes.append(("out.bias", (1,)))
    return shapes


def init_weights(cfg: UNetConfig, seed: int) -> dict:
    """He-style Gaussian init, std sqrt(2 / fan_in); biases zero."""
    rng = Rng(seed)
    params = {}
    for name, shape in param_shapes(cfg):
        if name.endswith(".bias"):
            params[name] = Tensor(np.zeros(shape), requires_grad=True)
            continue
        if len(shape) == 2:              # 1x1 conv: fan_in = C_in
            fan_in = shape[1]
        elif name.endswith("up.weight"):  # 2x2 transposed: (C_in, C_out, 2, 2)
            fan_in = shape[0] * 4
        else:                             # 3x3 conv: (C_out, C_in, 3, 3)
            fan_in = shape[1] * 9
        std = (2.0 / fan_in) ** 0.5
        size = 1
        for s in shape:
            size *= s
        data = (std * rng.normals(size)).reshape(shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


def unet_forward(cfg: UNetConfig, params: dict, x: Tensor) -> Tensor:
    if x.data.ndim != 4 or x.data.shape[1] != cfg.in_channels:
        raise ValueError(f"input must be (N, {cfg.in_channels}, H, W)")
    h, w = x.data.shape[2], x.data.shape[3]
    div = 1 << cfg.depth
    if h % div or w % div:
        raise ValueError(f"spatial size {h}x{w} not divisible by 2^depth = {div}")

    def block(t, prefix):
        t = relu(conv2d(t, params[f"{prefix}.conv1.weight"],
                        params[f"{prefix}.conv1.bias"]))
        return relu(conv2d(t, params[f"{prefix}.conv2.weight"],
                           params[f"{prefix}.conv2.bias"]))

    skips = []
    t = x
    for i in range(cfg.depth):
        t = block(t, f"enc{i}")
        skips.append(t)
        t = maxpool2(t)
    t = block(t, "mid")
    for i in reversed(range(cfg.depth)):
        t = upconv2(t, params[f"dec{i}.up.weight"], params[f"dec{i}.up.bias"])
        t = concat_channels(skips[i], t)
        t = block(t, f"dec{i}")
    return conv1x1(t, params["out.weight"], params["out.bias"])
