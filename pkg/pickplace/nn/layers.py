# pickplace/nn/layers.py
"""Forward and backward kernels on NHWC arrays.

Every backward function follows ``name_backward(output_grad, x, ...)``: the
gradient of the output first, then the forward inputs.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ArgumentError
from .tensor import check_finite

PadMode = Literal["zeros", "periodic"]


def _batched(x: np.ndarray) -> np.ndarray:
    if x.ndim == 3:
        return x[None]
    if x.ndim != 4:
        raise ArgumentError(f"expected HWC or NHWC input, got shape {x.shape}")
    return x


def pad2d(x: np.ndarray, pad: int, mode: PadMode = "zeros") -> np.ndarray:
    if pad == 0:
        return x
    widths = ((0, 0), (pad, pad), (pad, pad), (0, 0))
    if mode == "zeros":
        return np.pad(x, widths)
    if mode == "periodic":
        return np.pad(x, widths, mode="wrap")
    raise ArgumentError(f"unknown padding mode {mode!r}")


def _fold_axis(g: np.ndarray, axis: int, size: int, pad: int, mode: PadMode) -> np.ndarray:
    if mode == "zeros":
        return np.take(g, np.arange(pad, pad + size), axis=axis)
    src = (np.arange(size + 2 * pad) - pad) % size
    shape = list(g.shape)
    shape[axis] = size
    out = np.zeros(shape, dtype=g.dtype)
    idx: list[object] = [slice(None)] * g.ndim
    idx[axis] = src
    np.add.at(out, tuple(idx), g)
    return out


def pad2d_backward(output_grad: np.ndarray, x: np.ndarray, pad: int, mode: PadMode = "zeros") -> np.ndarray:
    if pad == 0:
        return output_grad
    g = _fold_axis(output_grad, 1, x.shape[1], pad, mode)
    return _fold_axis(g, 2, x.shape[2], pad, mode)


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # (N, Ho, Wo, C, kh, kw) -> (N, Ho, Wo, kh, kw, C)
    return win.transpose(0, 1, 2, 4, 5, 3)


def conv2d_forward(
    x: np.ndarray,
    kernel: np.ndarray,
    stride: int = 1,
    pad: int = 0,
    bias: np.ndarray | None = None,
    mode: PadMode = "zeros",
) -> np.ndarray:
    """Cross-correlation of ``x`` (N,H,W,Cin) with ``kernel`` (kh,kw,Cin,Cout)."""
    xb = _batched(x)
    if kernel.ndim != 4:
        raise ArgumentError(f"kernel must be (kh, kw, Cin, Cout), got {kernel.shape}")
    kh, kw, cin, cout = kernel.shape
    if xb.shape[3] != cin:
        raise ArgumentError(f"input has {xb.shape[3]} channels, kernel expects {cin}")
    if stride < 1:
        raise ArgumentError("stride must be >= 1")
    xp = pad2d(xb, pad, mode)
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ArgumentError(f"kernel {kh}x{kw} larger than padded input {xp.shape[1:3]}")
    cols = _im2col(xp, kh, kw, stride)
    n, ho, wo = cols.shape[:3]
    out = cols.reshape(n * ho * wo, kh * kw * cin) @ kernel.reshape(kh * kw * cin, cout)
    out = out.reshape(n, ho, wo, cout)
    if bias is not None:
        out = out + bias
    out = check_finite(out, "conv2d")
    return out if x.ndim == 4 else out[0]


def conv2d_backward(
    output_grad: np.ndarray,
    x: np.ndarray,
    kernel: np.ndarray,
    stride: int = 1,
    pad: int = 0,
    mode: PadMode = "zeros",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients with respect to ``x``, ``kernel`` and the bias."""
    xb = _batched(x)
    g = _batched(output_grad)
    kh, kw, cin, cout = kernel.shape
    xp = pad2d(xb, pad, mode)
    cols = _im2col(xp, kh, kw, stride)
    n, ho, wo = cols.shape[:3]
    g2 = g.reshape(n * ho * wo, cout)
    dk = (cols.reshape(n * ho * wo, kh * kw * cin).T @ g2).reshape(kernel.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ kernel.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += dcols[:, :, :, i, j, :]
    dx = pad2d_backward(dxp, xb, pad, mode)
    return (dx if x.ndim == 4 else dx[0]), dk, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(output_grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return output_grad * (x > 0)


@lru_cache(maxsize=64)
def upsample_matrix(size: int, mode: str = "clamp") -> np.ndarray:
    """``(2 size, size)`` bilinear weights, half-pixel aligned."""
    out = np.zeros((2 * size, size))
    for o in range(2 * size):
        src = (o + 0.5) / 2.0 - 0.5
        i0 = int(np.floor(src))
        f = src - i0
        for idx, wgt in ((i0, 1.0 - f), (i0 + 1, f)):
            if mode == "wrap":
                idx %= size
            else:
                idx = min(max(idx, 0), size - 1)
            out[o, idx] += wgt
    out.setflags(write=False)
    return out


def upsample2x_forward(x: np.ndarray, mode: PadMode = "zeros") -> np.ndarray:
    xb = _batched(x)
    m = "wrap" if mode == "periodic" else "clamp"
    a = upsample_matrix(xb.shape[1], m).astype(xb.dtype)
    b = upsample_matrix(xb.shape[2], m).astype(xb.dtype)
    out = np.einsum("ph,nhwc->npwc", a, xb)
    out = np.einsum("qw,npwc->npqc", b, out)
    return out if x.ndim == 4 else out[0]


def upsample2x_backward(output_grad: np.ndarray, x: np.ndarray, mode: PadMode = "zeros") -> np.ndarray:
    xb = _batched(x)
    g = _batched(output_grad)
    m = "wrap" if mode == "periodic" else "clamp"
    a = upsample_matrix(xb.shape[1], m).astype(g.dtype)
    b = upsample_matrix(xb.shape[2], m).astype(g.dtype)
    dx = np.einsum("qw,npqc->npwc", b, g)
    dx = np.einsum("ph,npwc->nhwc", a, dx)
    return dx if x.ndim == 4 else dx[0]


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != w.shape[0]:
        raise ArgumentError(f"input width {x.shape[-1]} does not match layer {w.shape}")
    return check_finite(x @ w + b, "dense")


def dense_backward(output_grad: np.ndarray, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return output_grad @ w.T, x.T @ output_grad, output_grad.sum(axis=0)
