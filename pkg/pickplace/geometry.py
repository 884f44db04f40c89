# pickplace/geometry.py
from __future__ import annotations

import math

import numpy as np


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, collinear points dropped."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    pts = pts[np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0.0, axis=1)])]
    if len(pts) < 3:
        return pts

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def shoelace_area(poly: np.ndarray) -> float:
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def hull_area(points: np.ndarray) -> float:
    return shoelace_area(convex_hull(points))


def regular_polygon_area(n: int, side: float) -> float:
    return 0.25 * n * side * side / math.tan(math.pi / n)


def inside_convex(pts: np.ndarray, poly: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of ``pts`` inside the convex polygon ``poly`` (either winding).

    ``tol`` grows the polygon outward by that distance along each edge normal.
    """
    q = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return np.zeros(len(q), dtype=bool)
    a = p
    b = np.roll(p, -1, axis=0)
    e = b - a
    elen = np.maximum(np.linalg.norm(e, axis=1), 1e-15)
    # signed distance of each point to each edge line, positive on the left
    cr = (e[None, :, 0] * (q[:, None, 1] - a[None, :, 1]) - e[None, :, 1] * (q[:, None, 0] - a[None, :, 0])) / elen
    area2 = float(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(np.roll(p[:, 0], -1), p[:, 1]))
    if area2 < 0.0:
        cr = -cr
    return np.all(cr >= -tol, axis=1)


def point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    q = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    ab = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return np.linalg.norm(q - a, axis=1)
    t = np.clip(((q - a) @ ab) / denom, 0.0, 1.0)
    return np.linalg.norm(q - (a + t[:, None] * ab), axis=1)


def polyline_distance(pts: np.ndarray, line: np.ndarray) -> np.ndarray:
    poly = np.asarray(line, dtype=np.float64).reshape(-1, 2)
    if len(poly) == 1:
        return np.linalg.norm(np.atleast_2d(pts) - poly[0], axis=1)
    d = [point_segment_distance(pts, poly[i], poly[i + 1]) for i in range(len(poly) - 1)]
    return np.min(np.stack(d), axis=0)


def points_along(line: np.ndarray, spacing: float, count: int) -> np.ndarray:
    """``count`` points at arc lengths ``0, spacing, 2*spacing, ...`` along a polyline."""
    poly = np.asarray(line, dtype=np.float64).reshape(-1, 2)
    seg = np.diff(poly, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    s = np.minimum(np.arange(count) * spacing, cum[-1])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[idx]) / np.maximum(seglen[idx], 1e-15)
    return poly[idx] + t[:, None] * seg[idx]
