# pickplace/nn/losses.py
from __future__ import annotations

import numpy as np

from ..errors import ArgumentError


def pixel_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """``-log softmax(logits)[label]`` over every cell, with its gradient ``softmax - onehot``.

    Reductions run in float64; the gradient comes back in the logits' dtype and shape.
    """
    z = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= int(label) < z.size:
        raise ArgumentError(f"label {label} outside [0, {z.size})")
    m = z.max()
    e = np.exp(z - m)
    s = e.sum()
    loss = float(np.log(s) + m - z[int(label)])
    grad = e / s
    grad[int(label)] -= 1.0
    return loss, grad.reshape(np.shape(logits)).astype(np.asarray(logits).dtype)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def logsumexp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))
