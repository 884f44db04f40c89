# pickplace/nn/tensor.py
from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from ..errors import ArgumentError, LogicError

_FINITE_CHECKS = False


def set_finite_checks(enabled: bool) -> None:
    """Turn the post-op finite-value assertions on or off (``DEBUG_FINITE_CHECKS``)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


def finite_checks_enabled() -> bool:
    return _FINITE_CHECKS


def check_finite(arr: np.ndarray, where: str) -> np.ndarray:
    if _FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise LogicError(f"non-finite values after {where}")
    return arr


class Tensor:
    """A parameter array with its gradient buffer. At most four dimensions (N, H, W, C)."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, data: np.ndarray, name: str = ""):
        arr = np.asarray(data)
        if arr.ndim > 4:
            raise ArgumentError(f"tensor {name!r} has {arr.ndim} dims; at most 4 supported")
        self.name = name
        self.data = arr
        self.grad = np.zeros_like(arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ArgumentError(f"gradient shape {g.shape} does not match {self.name} {self.data.shape}")
        self.grad = self.grad + check_finite(g, f"grad of {self.name}")

    def __repr__(self) -> str:
        return f"Tensor({self.name!r}, shape={self.shape}, dtype={self.data.dtype})"


class ParamSet:
    """Named tensors in a fixed order; the order is the checkpoint manifest order."""

    def __init__(self, tensors: Iterable[Tensor] = ()):
        self._t: dict[str, Tensor] = {}
        for t in tensors:
            self.add(t)

    def add(self, t: Tensor) -> Tensor:
        if t.name in self._t:
            raise ArgumentError(f"duplicate parameter {t.name!r}")
        self._t[t.name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __contains__(self, name: str) -> bool:
        return name in self._t

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._t.values())

    def __len__(self) -> int:
        return len(self._t)

    def names(self) -> list[str]:
        return list(self._t)

    def zero_grad(self) -> None:
        for t in self:
            t.zero_grad()

    def count(self) -> int:
        return sum(t.size for t in self)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._t.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._t) - set(arrays)
        if missing:
            raise ArgumentError(f"missing parameters {sorted(missing)}")
        for k, t in self._t.items():
            a = np.asarray(arrays[k])
            if a.shape != t.shape:
                raise ArgumentError(f"parameter {k} has shape {a.shape}, expected {t.shape}")
            t.data = a.astype(t.data.dtype)
            t.zero_grad()

    def astype(self, dtype) -> "ParamSet":
        return ParamSet(Tensor(t.data.astype(dtype), t.name) for t in self)
