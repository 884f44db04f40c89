# pickplace/nn/optim.py
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError
from .tensor import ParamSet


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(state: AdamState, params: ParamSet) -> ParamSet:
    """One bias-corrected Adam step on every tensor using its ``grad``; clears the grads."""
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for t in params:
        if t.grad.shape != t.data.shape:
            raise ArgumentError(f"gradient shape {t.grad.shape} does not match {t.name} {t.data.shape}")
        g = t.grad.astype(np.float64)
        m = state.m.get(t.name)
        v = state.v.get(t.name)
        if m is None or v is None:
            m = np.zeros(t.data.shape)
            v = np.zeros(t.data.shape)
        elif m.shape != t.data.shape:
            raise ArgumentError(f"moment shape {m.shape} does not match {t.name} {t.data.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[t.name], state.v[t.name] = m, v
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        t.data = (t.data - step).astype(t.data.dtype)
        t.zero_grad()
    return params
