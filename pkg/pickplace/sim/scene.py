# pickplace/sim/scene.py
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Literal

import numpy as np

from ..geometry import convex_hull, inside_convex
from ..spatial import Pose2, WorkspaceCalib, rot2

BEAD_RADIUS = 0.01
LINK_LENGTH = 2.0 * BEAD_RADIUS
CABLE_BEADS = 24
RING_BEADS = 32
FABRIC_GRID = 10
FABRIC_SIDE = 0.3
FABRIC_THICKNESS = 0.005
CUBE_SIDE = 0.03
CUBE_HEIGHT = 0.03


class Stage(IntEnum):
    FREE = 0
    BAG_OPEN = 1
    BAG_INSERT = 2
    BAG_TRANSPORT = 3
    FABRIC_FOLD = 4


@dataclass
class Cable:
    """Chain or ring of beads joined by fixed-length links."""

    id: int
    pos: np.ndarray
    closed: bool = False
    radius: float = BEAD_RADIUS
    rest: float = LINK_LENGTH
    color: tuple[float, float, float] = (0.95, 0.55, 0.1)

    @property
    def n(self) -> int:
        return len(self.pos)

    def link_lengths(self) -> np.ndarray:
        nxt = np.roll(self.pos, -1, axis=0) if self.closed else self.pos[1:]
        cur = self.pos if self.closed else self.pos[:-1]
        return np.linalg.norm(nxt - cur, axis=1)


@dataclass
class Fabric:
    """``n x n`` vertex grid, row-major, with a per-vertex layer counter."""

    id: int
    pos: np.ndarray
    n: int = FABRIC_GRID
    spacing: float = FABRIC_SIDE / (FABRIC_GRID - 1)
    layer: np.ndarray = field(default=None)  # type: ignore[assignment]
    color: tuple[float, float, float] = (0.3, 0.5, 0.9)

    def __post_init__(self) -> None:
        if self.layer is None:
            self.layer = np.zeros(self.n * self.n, dtype=np.int64)

    def grid(self) -> np.ndarray:
        return self.pos.reshape(self.n, self.n, 2)

    def corner_indices(self) -> list[int]:
        n = self.n
        return [0, n - 1, n * n - 1, n * (n - 1)]

    def footprint(self) -> np.ndarray:
        return convex_hull(self.pos)

    def top_layer(self) -> int:
        return int(self.layer.max())


@dataclass
class RigidItem:
    """Rigid block; ``parts`` are convex polygons in the item's local frame."""

    id: int
    x: float
    y: float
    theta: float
    parts: list[np.ndarray]
    height: float = CUBE_HEIGHT
    color: tuple[float, float, float] = (0.85, 0.15, 0.15)
    layer: int = 0

    @property
    def pose(self) -> Pose2:
        return Pose2(self.x, self.y, self.theta)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def world_parts(self) -> list[np.ndarray]:
        r = rot2(self.theta)
        return [p @ r.T + self.center for p in self.parts]

    def world_corners(self) -> np.ndarray:
        return np.concatenate(self.world_parts(), axis=0)

    def contains(self, xy: np.ndarray) -> bool:
        q = np.asarray(xy, dtype=np.float64)[None]
        return any(bool(inside_convex(q, part)[0]) for part in self.world_parts())


@dataclass
class Zone:
    """Target marking. ``points`` zones list target poses, ``polyline`` zones a path."""

    kind: Literal["polygon", "polyline", "points"]
    points: np.ndarray
    pose: Pose2
    visible: bool = True
    width: float = 2.0 * BEAD_RADIUS


@dataclass
class Bag:
    ring_id: int
    items: set[int] = field(default_factory=set)
    color: tuple[float, float, float] = (0.2, 0.4, 0.95)
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class Scene:
    calib: WorkspaceCalib
    cables: list[Cable] = field(default_factory=list)
    fabrics: list[Fabric] = field(default_factory=list)
    items: list[RigidItem] = field(default_factory=list)
    zones: list[Zone] = field(default_factory=list)
    bags: list[Bag] = field(default_factory=list)
    stage: Stage = Stage.FREE
    next_id: int = 1

    def copy(self) -> "Scene":
        return copy.deepcopy(self)

    def _take_id(self) -> int:
        oid = self.next_id
        self.next_id += 1
        return oid

    def add_cable(self, pos: np.ndarray, closed: bool = False, **kw) -> Cable:
        cab = Cable(self._take_id(), np.asarray(pos, dtype=np.float64).copy(), closed, **kw)
        self.cables.append(cab)
        return cab

    def add_fabric(self, pos: np.ndarray, n: int = FABRIC_GRID, spacing: float | None = None, **kw) -> Fabric:
        spacing = FABRIC_SIDE / (n - 1) if spacing is None else spacing
        fab = Fabric(self._take_id(), np.asarray(pos, dtype=np.float64).copy(), n, spacing, **kw)
        self.fabrics.append(fab)
        return fab

    def add_item(self, pose: Pose2, parts: list[np.ndarray], **kw) -> RigidItem:
        item = RigidItem(self._take_id(), pose.x, pose.y, pose.theta, [np.asarray(p, float) for p in parts], **kw)
        self.items.append(item)
        return item

    def add_bag(self, ring: Cable, color: tuple[float, float, float]) -> Bag:
        ring.color = color
        bag = Bag(ring.id, set(), color, ring.pos.mean(axis=0))
        self.bags.append(bag)
        return bag

    def object_ids(self) -> list[int]:
        return [c.id for c in self.cables] + [f.id for f in self.fabrics] + [i.id for i in self.items]

    def cable(self, oid: int) -> Cable:
        for c in self.cables:
            if c.id == oid:
                return c
        raise KeyError(oid)

    def fabric(self, oid: int) -> Fabric:
        for f in self.fabrics:
            if f.id == oid:
                return f
        raise KeyError(oid)

    def item(self, oid: int) -> RigidItem:
        for it in self.items:
            if it.id == oid:
                return it
        raise KeyError(oid)

    def bag_of_ring(self, ring_id: int) -> Bag | None:
        return next((b for b in self.bags if b.ring_id == ring_id), None)

    def ring_hull(self, bag: Bag) -> np.ndarray:
        return convex_hull(self.cable(bag.ring_id).pos)

    def items_inside(self, poly: np.ndarray) -> list[RigidItem]:
        if len(self.items) == 0 or len(poly) < 3:
            return []
        centers = np.array([it.center for it in self.items])
        mask = inside_convex(centers, poly)
        return [it for it, m in zip(self.items, mask) if m]

    def clamp(self) -> None:
        for c in self.cables:
            c.pos = self.calib.clamp(c.pos)
        for f in self.fabrics:
            f.pos = self.calib.clamp(f.pos)
        for it in self.items:
            it.x, it.y = (float(v) for v in self.calib.clamp(it.center))

    def check_finite(self) -> bool:
        arrays = [c.pos for c in self.cables] + [f.pos for f in self.fabrics]
        scalars = [v for it in self.items for v in (it.x, it.y, it.theta)]
        return all(np.all(np.isfinite(a)) for a in arrays) and all(math.isfinite(v) for v in scalars)


def box_part(length: float, width: float, cx: float = 0.0, cy: float = 0.0) -> np.ndarray:
    hx, hy = length / 2.0, width / 2.0
    return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]])


def cube_parts(side: float = CUBE_SIDE) -> list[np.ndarray]:
    return [box_part(side, side)]


def l_block_parts() -> list[np.ndarray]:
    # long bar plus a short leg on one end
    return [box_part(0.10, 0.03), box_part(0.03, 0.045, cx=0.035, cy=0.0375)]


def line_positions(start: np.ndarray, heading: float, n: int, spacing: float = LINK_LENGTH) -> np.ndarray:
    d = np.array([math.cos(heading), math.sin(heading)])
    return np.asarray(start, dtype=np.float64) + np.arange(n)[:, None] * spacing * d


def ring_positions(center: np.ndarray, n: int = RING_BEADS, side: float = LINK_LENGTH, phase: float = 0.0) -> np.ndarray:
    """Regular ``n``-gon whose edges have length ``side``."""
    r = side / (2.0 * math.sin(math.pi / n))
    a = phase + np.arange(n) * 2.0 * math.pi / n
    return np.asarray(center, dtype=np.float64) + r * np.stack([np.cos(a), np.sin(a)], axis=1)


def grid_positions(center: np.ndarray, theta: float, n: int = FABRIC_GRID, side: float = FABRIC_SIDE) -> np.ndarray:
    s = side / (n - 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    local = np.stack([ii.ravel() * s - side / 2.0, jj.ravel() * s - side / 2.0], axis=1)
    return local @ rot2(theta).T + np.asarray(center, dtype=np.float64)
