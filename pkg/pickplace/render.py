# pickplace/render.py
"""Orthographic top-down raster of a scene: colour, stacked height and object ids."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ArgumentError
from .geometry import convex_hull, inside_convex, polyline_distance
from .sim.scene import BEAD_RADIUS, FABRIC_THICKNESS, Fabric, RigidItem, Scene, Zone
from .spatial import WorkspaceCalib

TABLE_COLOR = (0.2, 0.2, 0.22)
ZONE_COLOR = (0.45, 0.8, 0.45)
BAG_BODY_SHADE = 0.55
OBSERVATION_FILL = TABLE_COLOR + (0.0, 0.0, 0.0)

# class ranks inside one layer: cloth and bag bodies, then beads, then rigid items
RANK_SHEET, RANK_BEAD, RANK_ITEM = 0, 1, 2


@dataclass
class _Prim:
    key: tuple[int, int, int, int]
    kind: str  # "disk" | "poly" | "line"
    geom: np.ndarray
    radius: float
    color: tuple[float, float, float]
    seg_id: int
    height: float


class _Grid:
    def __init__(self, c: WorkspaceCalib):
        self.c = c
        self.ps = c.pixel_size_m
        self.xs, self.ys = c.pixel_centers()

    def window(self, lo: np.ndarray, hi: np.ndarray) -> tuple[slice, slice] | None:
        ox, oy = self.c.origin
        u0 = max(0, math.floor((lo[0] - ox) / self.ps - 0.5))
        u1 = min(self.c.img_h, math.ceil((hi[0] - ox) / self.ps - 0.5) + 1)
        v0 = max(0, math.floor((lo[1] - oy) / self.ps - 0.5))
        v1 = min(self.c.img_w, math.ceil((hi[1] - oy) / self.ps - 0.5) + 1)
        if u0 >= u1 or v0 >= v1:
            return None
        return slice(u0, u1), slice(v0, v1)

    def centers(self, win: tuple[slice, slice]) -> np.ndarray:
        xx, yy = np.meshgrid(self.xs[win[0]], self.ys[win[1]], indexing="ij")
        return np.stack([xx, yy], axis=-1)

    def mask(self, prim: _Prim) -> tuple[tuple[slice, slice], np.ndarray] | None:
        g = prim.geom
        if prim.kind == "disk":
            win = self.window(g - prim.radius, g + prim.radius)
            if win is None:
                return None
            d = self.centers(win) - g
            return win, np.einsum("...i,...i->...", d, d) <= prim.radius * prim.radius
        if prim.kind == "line":
            half = 0.5 * prim.radius
            win = self.window(g.min(axis=0) - half, g.max(axis=0) + half)
            if win is None:
                return None
            pts = self.centers(win)
            dist = polyline_distance(pts.reshape(-1, 2), g).reshape(pts.shape[:2])
            return win, dist <= half
        win = self.window(g.min(axis=0), g.max(axis=0))
        if win is None:
            return None
        pts = self.centers(win)
        return win, inside_convex(pts.reshape(-1, 2), g).reshape(pts.shape[:2])


def _triangle_ok(t: np.ndarray) -> bool:
    a, b, c = t
    return abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) > 1e-14


def fabric_triangles(fab: Fabric) -> Iterator[tuple[np.ndarray, int]]:
    """Two triangles per grid cell with the highest layer among the cell's vertices."""
    n = fab.n
    g = fab.grid()
    lay = fab.layer.reshape(n, n)
    for i in range(n - 1):
        for j in range(n - 1):
            cell_layer = int(lay[i : i + 2, j : j + 2].max())
            for tri in (
                np.array([g[i, j], g[i + 1, j], g[i, j + 1]]),
                np.array([g[i + 1, j + 1], g[i, j + 1], g[i + 1, j]]),
            ):
                if _triangle_ok(tri):
                    yield tri, cell_layer


def _zone_prims(z: Zone) -> list[_Prim]:
    key = (-1, 0, 0, 0)
    if z.kind == "polygon":
        return [_Prim(key, "poly", convex_hull(z.points), 0.0, ZONE_COLOR, 0, 0.0)]
    if z.kind == "polyline":
        return [_Prim(key, "line", z.points, z.width, ZONE_COLOR, 0, 0.0)]
    return [_Prim(key, "disk", p, 0.5 * z.width, ZONE_COLOR, 0, 0.0) for p in z.points]


def _scene_prims(scene: Scene) -> list[_Prim]:
    prims: list[_Prim] = []
    seq = 0
    for z in scene.zones:
        if z.visible:
            prims += _zone_prims(z)
    for bag in scene.bags:
        ring = scene.cable(bag.ring_id)
        body = tuple(BAG_BODY_SHADE * c for c in bag.color)
        prims.append(_Prim((0, RANK_SHEET, ring.id, seq), "poly", convex_hull(ring.pos), 0.0, body, ring.id, FABRIC_THICKNESS))  # type: ignore[arg-type]
        seq += 1
    for fab in scene.fabrics:
        for tri, layer in fabric_triangles(fab):
            prims.append(_Prim((layer, RANK_SHEET, fab.id, seq), "poly", tri, 0.0, fab.color, fab.id, FABRIC_THICKNESS * (layer + 1)))
            seq += 1
    for cab in scene.cables:
        for p in cab.pos:
            prims.append(_Prim((0, RANK_BEAD, cab.id, seq), "disk", p, cab.radius, cab.color, cab.id, 2.0 * cab.radius))
            seq += 1
    for it in scene.items:
        for part in it.world_parts():
            prims.append(_Prim((it.layer, RANK_ITEM, it.id, seq), "poly", part, 0.0, it.color, it.id, item_height(it)))
            seq += 1
    prims.sort(key=lambda p: p.key)
    return prims


def item_height(it: RigidItem) -> float:
    return FABRIC_THICKNESS * it.layer + it.height


def _raster(scene: Scene, c: WorkspaceCalib) -> tuple[np.ndarray, np.ndarray]:
    grid = _Grid(c)
    h, w = c.img_h, c.img_w
    obs = np.zeros((h, w, 6), dtype=np.float32)
    obs[..., :3] = TABLE_COLOR
    seg = np.zeros((h, w), dtype=np.int32)
    for prim in _scene_prims(scene):
        hit = grid.mask(prim)
        if hit is None:
            continue
        win, m = hit
        block = obs[win]
        block[m, :3] = prim.color
        block[m, 3] = np.maximum(block[m, 3], prim.height)
        seg[win][m] = prim.seg_id
    obs[..., 4] = obs[..., 3]
    obs[..., 5] = obs[..., 3]
    return obs, seg


def render_observation(scene: Scene, c: WorkspaceCalib | None = None) -> np.ndarray:
    """``H x W x 6`` float32 image: RGB in [0, 1] then three copies of the height map."""
    return _raster(scene, c or scene.calib)[0]


def render_segmentation(scene: Scene, c: WorkspaceCalib | None = None) -> np.ndarray:
    return _raster(scene, c or scene.calib)[1]


def render_both(scene: Scene, c: WorkspaceCalib | None = None) -> tuple[np.ndarray, np.ndarray]:
    return _raster(scene, c or scene.calib)


def check_observation(obs: np.ndarray) -> None:
    if obs.ndim != 3 or obs.shape[2] != 6:
        raise ArgumentError(f"observation must be HxWx6, got {obs.shape}")
    if not np.all(np.isfinite(obs)):
        raise ArgumentError("observation has non-finite values")


# -- standalone masks, independent of occlusion -------------------------------------------


def fabric_mask(fab: Fabric, c: WorkspaceCalib) -> np.ndarray:
    grid = _Grid(c)
    out = np.zeros(c.shape, dtype=bool)
    for tri, _ in fabric_triangles(fab):
        hit = grid.mask(_Prim((0, 0, 0, 0), "poly", tri, 0.0, (0, 0, 0), 0, 0.0))
        if hit is not None:
            out[hit[0]] |= hit[1]
    return out


def zone_mask(z: Zone, c: WorkspaceCalib) -> np.ndarray:
    grid = _Grid(c)
    out = np.zeros(c.shape, dtype=bool)
    for prim in _zone_prims(z):
        hit = grid.mask(prim)
        if hit is not None:
            out[hit[0]] |= hit[1]
    return out


def item_mask(it: RigidItem, c: WorkspaceCalib) -> np.ndarray:
    grid = _Grid(c)
    out = np.zeros(c.shape, dtype=bool)
    for part in it.world_parts():
        hit = grid.mask(_Prim((0, 0, 0, 0), "poly", part, 0.0, (0, 0, 0), 0, 0.0))
        if hit is not None:
            out[hit[0]] |= hit[1]
    return out


def bead_disk_pixels(c: WorkspaceCalib, radius: float = BEAD_RADIUS) -> float:
    return math.pi * radius * radius / (c.pixel_size_m**2)


# -- image export ------------------------------------------------------------------------


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    img = np.clip(np.rint(np.asarray(rgb, dtype=np.float64)[..., :3] * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def write_pgm16(path: str | Path, depth_m: np.ndarray) -> None:
    """16-bit big-endian PGM with heights in millimetres."""
    mm = np.clip(np.rint(np.asarray(depth_m, dtype=np.float64) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape[:2]
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + mm.tobytes())


def write_heatmap(path: str | Path, values: np.ndarray) -> None:
    """8-bit PGM scaled min->0, max->255, so low values are dark."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    img = np.rint(scaled * 255.0).astype(np.uint8)
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    chans = 3 if magic == b"P6" else 1
    arr = np.frombuffer(data[pos:], dtype=dtype, count=w * h * chans)
    return arr.reshape(h, w, chans) if chans == 3 else arr.reshape(h, w)
