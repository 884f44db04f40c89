# pickplace/nn/fcn.py
"""Declarative fully convolutional hourglass with residual skips."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import ArgumentError
from .layers import (
    PadMode,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    upsample2x_backward,
    upsample2x_forward,
)
from .tensor import ParamSet, Tensor


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["conv", "up"] = "conv"
    k: int = 3
    cout: int = 16
    stride: int = 1
    act: Literal["relu", "linear"] = "relu"
    skip_from: Optional[int] = None


class FcnSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(..., ge=1)
    out_channels: int = Field(..., ge=1)
    layers: tuple[LayerSpec, ...]
    out_init_std: float = 1e-3

    @property
    def downsamples(self) -> int:
        return sum(1 for l in self.layers if l.kind == "conv" and l.stride == 2)

    def shapes(self) -> list[tuple[int, int]]:
        """(scale, channels) of every layer output; scale is the downsampling factor."""
        out: list[tuple[int, int]] = []
        scale, ch = 1, self.in_channels
        for i, l in enumerate(self.layers):
            if l.kind == "up":
                if scale < 2:
                    raise ArgumentError(f"layer {i}: upsample above input resolution")
                scale //= 2
            else:
                if l.stride not in (1, 2):
                    raise ArgumentError(f"layer {i}: stride must be 1 or 2")
                scale *= l.stride
                ch = l.cout
            if l.skip_from is not None:
                if not 0 <= l.skip_from < i:
                    raise ArgumentError(f"layer {i}: skip source {l.skip_from} must precede it")
                if out[l.skip_from] != (scale, ch):
                    raise ArgumentError(f"layer {i}: skip from {l.skip_from} joins unequal shapes")
            out.append((scale, ch))
        if scale != 1:
            raise ArgumentError("network does not return to input resolution")
        if ch != self.out_channels:
            raise ArgumentError(f"last layer has {ch} channels, spec says {self.out_channels}")
        return out


def hourglass_spec(in_channels: int, out_channels: int, width: int = 16) -> FcnSpec:
    """Eight convolutions, one stride-2 stage, bilinear upsampling and two residual joins."""
    w = width
    return FcnSpec(
        in_channels=in_channels,
        out_channels=out_channels,
        layers=(
            LayerSpec(cout=w),
            LayerSpec(cout=w, stride=2),
            LayerSpec(cout=w),
            LayerSpec(cout=w, skip_from=1),
            LayerSpec(cout=w),
            LayerSpec(kind="up"),
            LayerSpec(cout=w, skip_from=0),
            LayerSpec(cout=w),
            LayerSpec(k=1, cout=out_channels, act="linear"),
        ),
    )


def fcn_init(spec: FcnSpec, rng: np.random.Generator, dtype=np.float32, prefix: str = "") -> ParamSet:
    spec.shapes()
    params = ParamSet()
    cin = spec.in_channels
    last = max(i for i, l in enumerate(spec.layers) if l.kind == "conv")
    for i, l in enumerate(spec.layers):
        if l.kind != "conv":
            continue
        fan_in = l.k * l.k * cin
        std = spec.out_init_std if i == last else np.sqrt(2.0 / fan_in)
        w = rng.normal(0.0, std, size=(l.k, l.k, cin, l.cout)).astype(dtype)
        params.add(Tensor(w, f"{prefix}l{i}.w"))
        params.add(Tensor(np.zeros(l.cout, dtype=dtype), f"{prefix}l{i}.b"))
        cin = l.cout
    return params


def param_count(spec: FcnSpec) -> int:
    total, cin = 0, spec.in_channels
    for l in spec.layers:
        if l.kind == "conv":
            total += l.k * l.k * cin * l.cout + l.cout
            cin = l.cout
    return total


@dataclass
class FcnCache:
    x: np.ndarray
    inputs: list[np.ndarray]
    pre: list[Optional[np.ndarray]]
    outputs: list[np.ndarray]
    mode: PadMode


def fcn_forward(
    spec: FcnSpec, params: ParamSet, x: np.ndarray, mode: PadMode = "zeros", prefix: str = ""
) -> tuple[np.ndarray, FcnCache]:
    """Dense ``H x W x out_channels`` map for an ``H x W x in_channels`` input (batch optional)."""
    if x.shape[-1] != spec.in_channels:
        raise ArgumentError(f"input has {x.shape[-1]} channels, network expects {spec.in_channels}")
    f = 2 ** spec.downsamples
    h, w = x.shape[-3], x.shape[-2]
    if h % f or w % f:
        raise ArgumentError(f"input {h}x{w} not divisible by {f}")
    inputs: list[np.ndarray] = []
    pre: list[Optional[np.ndarray]] = []
    outs: list[np.ndarray] = []
    a = x
    for i, l in enumerate(spec.layers):
        inputs.append(a)
        if l.kind == "up":
            z = upsample2x_forward(a, mode)
        else:
            wt, b = params[f"{prefix}l{i}.w"].data, params[f"{prefix}l{i}.b"].data
            z = conv2d_forward(a, wt, l.stride, l.k // 2, b, mode)
        if l.skip_from is not None:
            z = z + outs[l.skip_from]
        pre.append(z)
        a = relu_forward(z) if (l.kind == "conv" and l.act == "relu") else z
        outs.append(a)
    return a, FcnCache(x, inputs, pre, outs, mode)


def fcn_backward(
    spec: FcnSpec, params: ParamSet, cache: FcnCache, output_grad: np.ndarray, prefix: str = ""
) -> np.ndarray:
    """Accumulate parameter gradients into ``params`` and return the input gradient."""
    pending: dict[int, np.ndarray] = {len(spec.layers) - 1: output_grad}
    dx = np.zeros_like(cache.x)
    for i in range(len(spec.layers) - 1, -1, -1):
        g = pending.pop(i, None)
        if g is None:
            continue
        l = spec.layers[i]
        if l.kind == "conv" and l.act == "relu":
            g = relu_backward(g, cache.pre[i])
        if l.skip_from is not None:
            j = l.skip_from
            pending[j] = pending[j] + g if j in pending else g
        if l.kind == "up":
            gin = upsample2x_backward(g, cache.inputs[i], cache.mode)
        else:
            wt = params[f"{prefix}l{i}.w"]
            gin, dk, db = conv2d_backward(g, cache.inputs[i], wt.data, l.stride, l.k // 2, cache.mode)
            wt.accumulate(dk.astype(wt.data.dtype))
            bt = params[f"{prefix}l{i}.b"]
            bt.accumulate(db.astype(bt.data.dtype))
        if i == 0:
            dx = gin
        else:
            pending[i - 1] = pending[i - 1] + gin if i - 1 in pending else gin
    return dx
