"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays. Each operation records a backward closure;
`backward(loss)` walks the graph in reverse topological order, so every
gradient is fully accumulated before it is consumed, and deposits gradients
on leaf tensors (those with `requires_grad` and no parents). Leaf gradients
accumulate across calls until `zero_grad`.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())


def _result(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# backward driver
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into each reachable leaf's `.grad`."""
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss tensor")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any differentiable tensor")
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            node._backward(g, grads)
        elif node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g


def _accum(grads: dict, tensor: Tensor, g) -> None:
    if not tensor.requires_grad:
        return
    key = id(tensor)
    if key in grads:
        grads[key] += g
    else:
        grads[key] = np.array(g, dtype=np.float64, copy=True)


def zero_grad(params) -> None:
    tensors = params.values() if isinstance(params, dict) else params
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise / reduction ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bwd(g, grads):
        _accum(grads, a, g)
        _accum(grads, b, g)

    return _result(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bwd(g, grads):
        _accum(grads, a, g)
        _accum(grads, b, -g)

    return _result(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bwd(g, grads):
        _accum(grads, a, g * b.data)
        _accum(grads, b, g * a.data)

    return _result(a.data * b.data, (a, b), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient 0 at exactly 0

    def bwd(g, grads):
        _accum(grads, x, g * mask)

    return _result(np.maximum(x.data, 0.0), (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def bwd(g, grads):
        _accum(grads, x, np.full_like(x.data, float(g) / n))

    return _result(np.asarray(x.data.mean()), (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    def bwd(g, grads):
        _accum(grads, x, np.full_like(x.data, float(g)))

    return _result(np.asarray(x.data.sum()), (x,), bwd)


def snap_grid(x: Tensor, bits: int = 40) -> Tensor:
    """Round values to the 2^-bits fixed-point grid; identity gradient.

    With both operands on this grid and magnitudes below 2^(53-bits), sums
    and differences are exact in float64, which makes residual identities
    such as (x - n) + n == x hold bitwise. The default grid step (~9e-13)
    sits far below float32 resolution for unit-range data, so storage
    round-trips are unaffected.
    """
    scale = float(1 << bits)

    def bwd(g, grads):
        _accum(grads, x, g)

    return _result(np.round(x.data * scale) / scale, (x,), bwd)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ValueError("concat_channels expects NCHW tensors")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    ca = a.data.shape[1]

    def bwd(g, grads):
        _accum(grads, a, g[:, :ca])
        _accum(grads, b, g[:, ca:])

    return _result(np.concatenate([a.data, b.data], axis=1), (a, b), bwd)


# ---------------------------------------------------------------------------
# convolution / pooling ops
# ---------------------------------------------------------------------------

def _im2col(padded: np.ndarray, kh: int, kw: int, stride: int):
    """(N, C*kh*kw, Ho*Wo) patch matrix from a padded NCHW array."""
    v = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    v = v[:, :, ::stride, ::stride]              # (N, C, Ho, Wo, kh, kw)
    n, c, ho, wo = v.shape[:4]
    v = np.ascontiguousarray(v.transpose(0, 1, 4, 5, 2, 3))
    return v.reshape(n, c * kh * kw, ho * wo), ho, wo


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           pad: int = 1) -> Tensor:
    """Cross-correlation with zero padding; NCHW layout.

    weight: (C_out, C_in, kh, kw); bias: (C_out,). At stride 1 / pad 1 with
    3x3 kernels the spatial size is preserved.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects a NCHW input and OIHW weight")
    n, c, h, w = x.data.shape
    co, ci, kh, kw = weight.data.shape
    if c != ci:
        raise ValueError(f"input has {c} channels, weight expects {ci}")
    if bias.data.shape != (co,):
        raise ValueError("bias shape must be (C_out,)")
    if (h + 2 * pad - kh) < 0 or (w + 2 * pad - kw) < 0:
        raise ValueError("kernel larger than padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    w2 = weight.data.reshape(co, c * kh * kw)
    out = np.matmul(w2[None], cols).reshape(n, co, ho, wo)
    out += bias.data[None, :, None, None]

    def bwd(g, grads):
        _accum(grads, bias, g.sum(axis=(0, 2, 3)))
        gflat = np.ascontiguousarray(g).reshape(n, co, ho * wo)
        if weight.requires_grad:
            dw = np.matmul(gflat, cols.transpose(0, 2, 1)).sum(axis=0)
            _accum(grads, weight, dw.reshape(co, c, kh, kw))
        if x.requires_grad:
            if stride == 1:
                # input gradient is itself a correlation of g with the
                # flipped, channel-transposed kernel
                gp = np.pad(g, ((0, 0), (0, 0), (kh - 1 - pad, kh - 1 - pad),
                                (kw - 1 - pad, kw - 1 - pad)))
                gcols, _, _ = _im2col(gp, kh, kw, 1)
                wflip = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                dx = np.matmul(wflip.reshape(c, co * kh * kw)[None], gcols)
                _accum(grads, x, dx.reshape(n, c, h, w))
            else:
                gcols = np.matmul(w2.T[None], gflat)  # (N, C*kh*kw, Ho*Wo)
                gcols = gcols.reshape(n, c, kh, kw, ho, wo)
                dxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i:i + stride * ho:stride,
                            j:j + stride * wo:stride] += gcols[:, :, i, j]
                _accum(grads, x, dxp[:, :, pad:pad + h, pad:pad + w]
                       if pad else dxp)

    return _result(out, (x, weight, bias), bwd)


def conv1x1(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Pointwise channel mixing; weight: (C_out, C_in), bias: (C_out,)."""
    if x.data.ndim != 4 or weight.data.ndim != 2:
        raise ValueError("conv1x1 expects a NCHW input and (C_out, C_in) weight")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ValueError("channel mismatch")
    n, c, h, w = x.data.shape
    co = weight.data.shape[0]
    flat = x.data.reshape(n, c, h * w)
    out = np.matmul(weight.data[None], flat).reshape(n, co, h, w).copy()
    out += bias.data[None, :, None, None]

    def bwd(g, grads):
        _accum(grads, bias, g.sum(axis=(0, 2, 3)))
        gflat = g.reshape(n, co, h * w)
        if weight.requires_grad:
            _accum(grads, weight,
                   np.matmul(gflat, flat.transpose(0, 2, 1)).sum(axis=0))
        if x.requires_grad:
            _accum(grads, x, np.matmul(weight.data.T[None],
                                       gflat).reshape(n, c, h, w))

    return _result(out, (x, weight, bias), bwd)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; ties go to the first position in
    (0,0), (0,1), (1,0), (1,1) scan order."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError("maxpool2 requires even spatial dimensions")
    ho, wo = h // 2, w // 2
    tiles = (x.data.reshape(n, c, ho, 2, wo, 2)
             .transpose(0, 1, 2, 4, 3, 5)
             .reshape(n, c, ho, wo, 4))
    idx = np.argmax(tiles, axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]

    def bwd(g, grads):
        g4 = np.zeros((n, c, ho, wo, 4))
        np.put_along_axis(g4, idx[..., None], g[..., None], axis=-1)
        gx = (g4.reshape(n, c, ho, wo, 2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, w))
        _accum(grads, x, gx)

    return _result(out, (x,), bwd)


def upconv2(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Transposed 2x2 convolution with stride 2 (doubles H and W).

    weight: (C_in, C_out, 2, 2); bias: (C_out,).
    """
    n, c, h, w = x.data.shape
    ci, co, kh, kw = weight.data.shape
    if c != ci or (kh, kw) != (2, 2):
        raise ValueError("upconv2 weight must be (C_in, C_out, 2, 2) matching input")
    flat = x.data.reshape(n, c, h * w)
    # rows of wm are (i, j, co); one batched matmul covers all four taps
    wm = weight.data.transpose(2, 3, 1, 0).reshape(4 * co, c)
    r = np.matmul(wm[None], flat).reshape(n, 2, 2, co, h, w)
    out = np.ascontiguousarray(r.transpose(0, 3, 4, 1, 5, 2)).reshape(n, co, 2 * h, 2 * w)
    out += bias.data[None, :, None, None]

    def bwd(g, grads):
        _accum(grads, bias, g.sum(axis=(0, 2, 3)))
        gview = g.reshape(n, co, h, 2, w, 2)
        gm = np.ascontiguousarray(gview.transpose(0, 3, 5, 1, 2, 4))
        gm = gm.reshape(n, 4 * co, h * w)
        if weight.requires_grad:
            dw = np.matmul(flat, gm.transpose(0, 2, 1)).sum(axis=0)  # (C, 4*Co)
            _accum(grads, weight,
                   dw.reshape(c, 2, 2, co).transpose(0, 3, 1, 2))
        if x.requires_grad:
            _accum(grads, x, np.matmul(wm.T[None], gm).reshape(n, c, h, w))

    return _result(out, (x, weight, bias), bwd)
