# pickplace/spatial.py
"""Workspace calibration, planar poses and SE(2) image transforms.

Pixel coordinates are ``(u, v)`` with ``u`` the row and ``v`` the column. World
``x`` runs along rows and world ``y`` along columns, so a rotation by ``alpha``
in pixel space is the same rotation in the world frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import ArgumentError, BoundsError

TWO_PI = 2.0 * math.pi


class WorkspaceCalib(BaseModel):
    model_config = ConfigDict(frozen=True)

    origin: tuple[float, float] = (0.0, 0.0)
    width_m: float = 1.0
    height_m: float = 0.5
    img_h: int = 80
    img_w: int = 160

    @model_validator(mode="after")
    def _square_pixels(self) -> "WorkspaceCalib":
        if self.img_h <= 0 or self.img_w <= 0:
            raise ArgumentError("image dimensions must be positive")
        if abs(self.height_m / self.img_h - self.width_m / self.img_w) > 1e-9:
            raise ArgumentError(
                f"non-square pixels: {self.height_m}/{self.img_h} vs {self.width_m}/{self.img_w}"
            )
        return self

    @property
    def pixel_size_m(self) -> float:
        return self.height_m / self.img_h

    @property
    def shape(self) -> tuple[int, int]:
        return (self.img_h, self.img_w)

    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    def upper(self) -> np.ndarray:
        return self.lower() + np.array([self.height_m, self.width_m])

    def clamp(self, xy: np.ndarray, margin: float = 1e-6) -> np.ndarray:
        """Clamp world positions into the workspace (last axis is x, y)."""
        return np.clip(xy, self.lower(), self.upper() - margin)

    def contains(self, xy: Sequence[float]) -> bool:
        p = np.asarray(xy, dtype=np.float64)
        return bool(np.all(p >= self.lower()) and np.all(p < self.upper()))

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ps = self.pixel_size_m
        xs = self.origin[0] + (np.arange(self.img_h) + 0.5) * ps
        ys = self.origin[1] + (np.arange(self.img_w) + 0.5) * ps
        return xs, ys


def wrap_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of values just below 2*pi can round up to exactly 2*pi
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ArgumentError(f"non-finite pose {self.x}, {self.y}, {self.theta}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def rot2(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


@dataclass(frozen=True)
class ImageSE2:
    """``T(p) = pivot + R(alpha) (p - pivot) + (du, dv)`` on pixel coordinates."""

    du: float = 0.0
    dv: float = 0.0
    alpha: float = 0.0
    pivot: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        vals = (self.du, self.dv, self.alpha, *self.pivot)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ArgumentError(f"non-finite transform parameters {vals}")

    @property
    def is_identity(self) -> bool:
        return self.du == 0.0 and self.dv == 0.0 and self.alpha == 0.0

    def apply(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64)
        piv = np.asarray(self.pivot, dtype=np.float64)
        return piv + (p - piv) @ rot2(self.alpha).T + np.array([self.du, self.dv])

    def apply_inverse(self, pts: np.ndarray) -> np.ndarray:
        q = np.asarray(pts, dtype=np.float64)
        piv = np.asarray(self.pivot, dtype=np.float64)
        return piv + (q - piv - np.array([self.du, self.dv])) @ rot2(-self.alpha).T

    def inverse(self) -> "ImageSE2":
        pu, pv = self.pivot
        return ImageSE2(-self.du, -self.dv, -self.alpha, (pu + self.du, pv + self.dv))

    def apply_pixel(self, p: Sequence[int]) -> tuple[int, int]:
        q = round_half_up(self.apply(np.asarray(p, dtype=np.float64)))
        return int(q[0]), int(q[1])


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def pixel_to_world(p: Sequence[int], c: WorkspaceCalib) -> np.ndarray:
    u, v = int(p[0]), int(p[1])
    if not (0 <= u < c.img_h and 0 <= v < c.img_w):
        raise BoundsError(f"pixel {(u, v)} outside {c.img_h}x{c.img_w}")
    ps = c.pixel_size_m
    return np.array([c.origin[0] + (u + 0.5) * ps, c.origin[1] + (v + 0.5) * ps])


def world_to_pixel(xy: Sequence[float], c: WorkspaceCalib, clip: bool = False) -> tuple[int, int]:
    x, y = float(xy[0]), float(xy[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ArgumentError(f"non-finite world position {(x, y)}")
    ps = c.pixel_size_m
    u = math.floor((x - c.origin[0]) / ps)
    v = math.floor((y - c.origin[1]) / ps)
    if clip:
        return min(max(u, 0), c.img_h - 1), min(max(v, 0), c.img_w - 1)
    if not (0 <= u < c.img_h and 0 <= v < c.img_w):
        raise BoundsError(f"world position {(x, y)} maps outside the image ({u}, {v})")
    return u, v


def _fill_vector(fill: float | Sequence[float], channels: int, dtype) -> np.ndarray:
    f = np.asarray(fill, dtype=dtype)
    if f.ndim == 0:
        return np.full(channels, f, dtype=dtype)
    if f.shape != (channels,):
        raise ArgumentError(f"fill has shape {f.shape}, expected ({channels},)")
    return f


def source_coords(t: ImageSE2, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-mapped (row, col) sample locations for every output pixel."""
    h, w = shape
    uu, vv = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src = t.apply_inverse(np.stack([uu, vv], axis=-1))
    return src[..., 0], src[..., 1]


def nearest_index(
    t: ImageSE2, out_shape: tuple[int, int], in_shape: tuple[int, int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Flat source index per output pixel for nearest sampling, plus a validity mask.

    The gather is its own adjoint's scatter: gradients go back with ``np.add.at``.
    """
    in_shape = in_shape or out_shape
    su, sv = source_coords(t, out_shape)
    iu, iv = round_half_up(su), round_half_up(sv)
    valid = (iu >= 0) & (iu < in_shape[0]) & (iv >= 0) & (iv < in_shape[1])
    flat = np.where(valid, iu * in_shape[1] + iv, 0)
    return flat, valid


def transform_image_se2(
    img: np.ndarray,
    t: ImageSE2,
    interp: Literal["nearest", "bilinear"] = "nearest",
    fill: float | Sequence[float] = 0.0,
) -> np.ndarray:
    """Resample ``img`` so that ``out[q] = img[T^-1(q)]``; out-of-frame samples get ``fill``."""
    a = np.asarray(img)
    if not np.all(np.isfinite(a)):
        raise ArgumentError("image contains non-finite values")
    h, w = a.shape[:2]
    pu, pv = t.pivot
    if not (0 <= pu < h and 0 <= pv < w):
        raise BoundsError(f"pivot {t.pivot} outside {h}x{w}")
    if t.is_identity:
        return a.copy()

    squeeze = a.ndim == 2
    src = a[..., None] if squeeze else a
    ch = src.shape[2]
    fv = _fill_vector(fill, ch, src.dtype)
    flat_src = src.reshape(h * w, ch)

    if interp == "nearest":
        idx, valid = nearest_index(t, (h, w))
        out = np.where(valid[..., None], flat_src[idx], fv)
    elif interp == "bilinear":
        su, sv = source_coords(t, (h, w))
        u0, v0 = np.floor(su).astype(np.int64), np.floor(sv).astype(np.int64)
        fu, fv_ = su - u0, sv - v0
        out = np.zeros((h, w, ch), dtype=np.float64)
        for du, dv, wgt in (
            (0, 0, (1 - fu) * (1 - fv_)),
            (1, 0, fu * (1 - fv_)),
            (0, 1, (1 - fu) * fv_),
            (1, 1, fu * fv_),
        ):
            uu, vv = u0 + du, v0 + dv
            ok = (uu >= 0) & (uu < h) & (vv >= 0) & (vv < w)
            vals = np.where(ok[..., None], flat_src[np.where(ok, uu * w + vv, 0)], fv)
            out += wgt[..., None] * vals
        out = out.astype(src.dtype)
    else:
        raise ArgumentError(f"unknown interpolation {interp!r}")
    return out[..., 0] if squeeze else out


def rotation_stack(n_rots: int, pivot: Sequence[float]) -> list[ImageSE2]:
    if n_rots < 1:
        raise ArgumentError(f"n_rots must be >= 1, got {n_rots}")
    pv = (float(pivot[0]), float(pivot[1]))
    return [ImageSE2(0.0, 0.0, k * TWO_PI / n_rots, pv) for k in range(n_rots)]


def rotation_bin(theta: float, n_rots: int) -> int:
    """Nearest rotation bin; exact half-way ties go to the lower bin."""
    if n_rots < 1:
        raise ArgumentError(f"n_rots must be >= 1, got {n_rots}")
    q = wrap_angle(theta) / (TWO_PI / n_rots)
    return int(math.ceil(q - 0.5)) % n_rots
