"""Dense-tensor autodiff engine, U-Net blocks, Adam, and checkpoints."""

from .adam import Adam
from .checkpoint import load_checkpoint, save_checkpoint
from .tensor import (Tensor, add, backward, concat_channels, conv1x1, conv2d,
                     maxpool2, mean_all, mul, relu, snap_grid, sub, sum_all,
                     upconv2, zero_grad)
from .unet import UNetConfig, init_weights, param_shapes, unet_forward

__all__ = [
    "Adam", "Tensor", "UNetConfig", "add", "backward", "concat_channels",
    "conv1x1", "conv2d", "init_weights", "load_checkpoint", "maxpool2",
    "mean_all", "mul", "param_shapes", "relu", "save_checkpoint", "snap_grid",
    "sub", "sum_all", "unet_forward", "upconv2", "zero_grad",
]
