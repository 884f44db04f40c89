# pickplace/harness/oracles.py
"""Slow nested-loop references used to cross-check the vectorized kernels."""
from __future__ import annotations

import itertools
import math

import numpy as np

from ..errors import ArgumentError


def naive_conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, pad: int = 0, bias: np.ndarray | None = None) -> np.ndarray:
    """Zero-padded cross-correlation of an ``H x W x Cin`` map with a ``k x k x Cin x Cout`` kernel."""
    h, w, cin = x.shape
    k, _, _, cout = kernel.shape
    xp = np.zeros((h + 2 * pad, w + 2 * pad, cin))
    xp[pad : pad + h, pad : pad + w] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((ho, wo, cout))
    for i in range(ho):
        for j in range(wo):
            for o in range(cout):
                acc = 0.0 if bias is None else float(bias[o])
                for a in range(k):
                    for b in range(k):
                        for c in range(cin):
                            acc += xp[i * stride + a, j * stride + b, c] * kernel[a, b, c, o]
                out[i, j, o] = acc
    return out


def _reflect(i: int, n: int) -> int:
    if i < 0:
        return -i
    if i >= n:
        return 2 * (n - 1) - i
    return i


def naive_transport(query: np.ndarray, key: np.ndarray, pick: tuple[int, int], crop_size: int, n_rots: int) -> np.ndarray:
    """Rotate a crop of ``query`` about ``pick`` and slide it over the zero-padded ``key``."""
    h, w, d = key.shape
    half = crop_size // 2
    pu, pv = pick
    out = np.zeros((n_rots, h, w))
    for r in range(n_rots):
        alpha = r * 2.0 * math.pi / n_rots
        ca, sa = math.cos(alpha), math.sin(alpha)
        crop = np.zeros((crop_size, crop_size, d))
        for a in range(crop_size):
            for b in range(crop_size):
                du, dv = a - half, b - half
                su = math.floor(pu + half + ca * du + sa * dv + 0.5)
                sv = math.floor(pv + half - sa * du + ca * dv + 0.5)
                if 0 <= su < h + crop_size and 0 <= sv < w + crop_size:
                    crop[a, b] = query[_reflect(su - half, h), _reflect(sv - half, w)]
        for u in range(h):
            for v in range(w):
                acc = 0.0
                for a in range(crop_size):
                    for b in range(crop_size):
                        ku, kv = u + a - half, v + b - half
                        if 0 <= ku < h and 0 <= kv < w:
                            acc += float(crop[a, b] @ key[ku, kv])
                out[r, u, v] = acc / (crop_size * crop_size)
    return out


def naive_goal_split(
    query: np.ndarray, key: np.ndarray, goal: np.ndarray, pick: tuple[int, int], crop_size: int, n_rots: int
) -> np.ndarray:
    return naive_transport(query * goal, key * goal, pick, crop_size, n_rots)


def brute_force_ring_cost(beads: np.ndarray, targets: np.ndarray) -> float:
    """Minimum summed distance over every permutation that keeps ring neighbours adjacent."""
    n = len(beads)
    if n != len(targets) or n < 3:
        raise ArgumentError("brute force needs equal counts of at least 3")
    best = math.inf
    for perm in itertools.permutations(range(n)):
        steps = {(perm[(i + 1) % n] - perm[i]) % n for i in range(n)}
        if steps not in ({1}, {n - 1}):
            continue
        cost = float(sum(np.linalg.norm(beads[i] - targets[perm[i]]) for i in range(n)))
        best = min(best, cost)
    return best
