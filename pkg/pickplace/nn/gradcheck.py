# pickplace/nn/gradcheck.py
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import ParamSet

LossFn = Callable[[], float]


def finite_diff_grad_check(
    loss_fn: LossFn,
    params: ParamSet,
    h: float = 1e-5,
    n_coords: int = 64,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
) -> float:
    """Largest relative error between stored gradients and central differences.

    ``params`` must already hold analytic gradients for the current values;
    ``loss_fn`` re-evaluates the loss with whatever the tensors hold. At most
    ``n_coords`` coordinates are checked, all of them when there are fewer.
    """
    rng = rng or np.random.default_rng(0)
    coords = [(t, i) for t in params for i in range(t.size)]
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[int(k)] for k in sorted(pick)]
    analytic = {id(t): t.grad.copy() for t in params}
    worst = 0.0
    for t, i in coords:
        flat = t.data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        num = (up - down) / (2.0 * h)
        ana = float(analytic[id(t)].reshape(-1)[i])
        err = abs(ana - num) / max(abs(ana), abs(num), floor)
        worst = max(worst, err)
    return worst
