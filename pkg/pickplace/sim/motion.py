# pickplace/sim/motion.py
"""The pick-and-place motion primitive over a planar scene."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Literal

import numpy as np
import structlog
from pydantic import BaseModel, Field

from ..errors import ArgumentError
from ..geometry import convex_hull, inside_convex
from ..spatial import Pose2, rot2
from .scene import FABRIC_THICKNESS, Cable, Fabric, RigidItem, Scene, Stage
from .solver import follow_the_leader, relax_constraints

log = structlog.get_logger(__name__)

TIE_TOL = 1e-12
RELEASE_SWEEPS = 4
TAUT_FRACTION = 0.95


class StageProfile(BaseModel):
    """Drag semantics for one task stage.

    ``drag_hops`` pins ring beads farther than that many hops from the grasp;
    ``rigid_ring`` carries the ring and enclosed items as one body;
    ``fold`` turns fabric drags that end on the fabric into a fold.
    """

    drag_hops: int | None = None
    rigid_ring: bool = False
    fold: bool = False


def _default_profiles() -> dict[Stage, StageProfile]:
    return {
        Stage.FREE: StageProfile(),
        Stage.BAG_OPEN: StageProfile(drag_hops=4),
        Stage.BAG_INSERT: StageProfile(),
        Stage.BAG_TRANSPORT: StageProfile(rigid_ring=True),
        Stage.FABRIC_FOLD: StageProfile(fold=True),
    }


class MotionParams(BaseModel):
    grasp_radius_m: float = Field(0.03, gt=0.0)
    substeps: int = Field(20, ge=1)
    relax_iterations: int = Field(30, ge=1)
    stage_profiles: dict[Stage, StageProfile] = Field(default_factory=_default_profiles)

    def profile(self, stage: Stage) -> StageProfile:
        return self.stage_profiles.get(stage, StageProfile())


@dataclass(frozen=True)
class PickPlaceAction:
    pick: Pose2
    place: Pose2

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.pick.x, self.pick.y, self.pick.theta, self.place.x, self.place.y, self.place.theta]
        )

    @classmethod
    def from_array(cls, a: np.ndarray) -> "PickPlaceAction":
        v = [float(x) for x in np.asarray(a).ravel()[:6]]
        return cls(Pose2(v[0], v[1], v[2]), Pose2(v[3], v[4], v[5]))


@dataclass(frozen=True)
class GraspHandle:
    kind: Literal["bead", "vertex", "item"]
    obj_id: int
    index: int = 0


class MotionEvent(str, Enum):
    MISSED = "missed-grasp"
    MOVED = "moved"


def attach_nearest(scene: Scene, p: np.ndarray, params: MotionParams) -> GraspHandle | None:
    """Nearest bead, fabric vertex, or rigid item containing ``p`` within the grasp radius."""
    q = np.asarray(p, dtype=np.float64)
    best: tuple[float, int, int, str] | None = None

    def offer(dist: float, oid: int, idx: int, kind: str) -> None:
        nonlocal best
        if dist > params.grasp_radius_m:
            return
        if best is None or dist < best[0] - TIE_TOL or (
            abs(dist - best[0]) <= TIE_TOL and (oid, idx) < (best[1], best[2])
        ):
            best = (dist, oid, idx, kind)

    for cab in scene.cables:
        d = np.linalg.norm(cab.pos - q, axis=1)
        i = int(np.flatnonzero(d <= d.min() + TIE_TOL)[0])
        offer(float(d[i]), cab.id, i, "bead")
    for fab in scene.fabrics:
        d = np.linalg.norm(fab.pos - q, axis=1)
        i = int(np.flatnonzero(d <= d.min() + TIE_TOL)[0])
        offer(float(d[i]), fab.id, i, "vertex")
    for it in scene.items:
        if it.contains(q):
            offer(0.0, it.id, 0, "item")

    if best is None:
        return None
    return GraspHandle(best[3], best[1], best[2])  # type: ignore[arg-type]


def _hop_distance(n: int, i: int, closed: bool) -> np.ndarray:
    k = np.abs(np.arange(n) - i)
    return np.minimum(k, n - k) if closed else k


def _within_reach(target: np.ndarray, anchors: np.ndarray, reach: float, sweeps: int = 20) -> np.ndarray:
    """Pull ``target`` into the intersection of the discs of radius ``reach`` about ``anchors``."""
    p = target.copy()
    for _ in range(sweeps):
        for q in anchors:
            d = p - q
            dist = float(np.hypot(d[0], d[1]))
            if dist > reach:
                p = q + d * (reach / dist)
    return p


def _update_item_support(scene: Scene, item: RigidItem) -> None:
    """Settle a released item onto whatever fabric lies under it and update bag membership."""
    c = item.center[None]
    item.layer = 0
    for fab in scene.fabrics:
        if inside_convex(c, fab.footprint())[0]:
            item.layer = max(item.layer, fab.top_layer() + 1)
    for bag in scene.bags:
        if inside_convex(c, scene.ring_hull(bag))[0]:
            bag.items.add(item.id)
        else:
            bag.items.discard(item.id)


def _move_item(scene: Scene, item: RigidItem, a: PickPlaceAction) -> None:
    dth = a.place.theta - a.pick.theta
    grasp = a.pick.xy
    new_c = a.place.xy + rot2(dth) @ (item.center - grasp)
    new_c = scene.calib.clamp(new_c)
    item.x, item.y = float(new_c[0]), float(new_c[1])
    item.theta = Pose2(0.0, 0.0, item.theta + dth).theta
    _update_item_support(scene, item)


def _transport_ring(scene: Scene, cab: Cable, idx: int, target: np.ndarray) -> None:
    delta = target - cab.pos[idx]
    # translate as one body; the ring stops at the table edge instead of being squashed
    lo, hi = scene.calib.lower(), scene.calib.upper() - 1e-6
    delta += np.maximum(lo - (cab.pos.min(axis=0) + delta), 0.0) - np.maximum(cab.pos.max(axis=0) + delta - hi, 0.0)
    riders = scene.items_inside(convex_hull(cab.pos))
    cab.pos = scene.calib.clamp(cab.pos + delta)
    for it in riders:
        c = scene.calib.clamp(it.center + delta)
        it.x, it.y = float(c[0]), float(c[1])
    bag = scene.bag_of_ring(cab.id)
    if bag is not None:
        bag.items |= {it.id for it in riders}


def resting_items(scene: Scene, fab: Fabric) -> list[RigidItem]:
    if not scene.items:
        return []
    hull = fab.footprint()
    return [it for it in scene.items if it.layer > 0 and inside_convex(it.center[None], hull)[0]]


def fold_fabric(scene: Scene, fab: Fabric, idx: int, target: np.ndarray) -> None:
    """Reflect the pick side of ``fab`` across a crease between the grasped vertex and ``target``.

    The crease sits on the perpendicular bisector of pick->place, pushed toward the
    pick side so it clears every item resting on the fabric plus that item's height.
    """
    p = fab.pos[idx].copy()
    span = target - p
    length = float(np.linalg.norm(span))
    if length < 1e-9:
        return
    u = span / length
    mid = 0.5 * (p + target)
    items = resting_items(scene, fab)
    shift = 0.0
    for it in items:
        shift = min(shift, float(np.min((it.world_corners() - mid) @ u)) - it.height)
    s = (fab.pos - mid) @ u
    flip = s < shift
    if not np.any(flip):
        return
    top = max([fab.top_layer()] + [it.layer for it in items])
    fab.pos[flip] -= (2.0 * (s[flip] - shift))[:, None] * u
    fab.layer[flip] = top + 1
    fab.pos = scene.calib.clamp(fab.pos)


def _drag(scene: Scene, kind: str, oid: int, idx: int, a: PickPlaceAction, params: MotionParams) -> None:
    profile = params.profile(scene.stage)
    body: Cable | Fabric = scene.cable(oid) if kind == "bead" else scene.fabric(oid)
    # the grasped point keeps its offset from the gripper
    target = scene.calib.clamp(body.pos[idx] + (a.place.xy - a.pick.xy))

    if kind == "bead" and profile.rigid_ring and scene.bag_of_ring(oid) is not None:
        _transport_ring(scene, body, idx, target)  # type: ignore[arg-type]
        relax_constraints(scene, RELEASE_SWEEPS * params.relax_iterations)
        return
    if kind == "vertex" and profile.fold and inside_convex(target[None], body.footprint(), tol=0.5 * body.spacing)[0]:  # type: ignore[union-attr]
        fold_fabric(scene, body, idx, target)  # type: ignore[arg-type]
        relax_constraints(scene, params.relax_iterations)
        return

    pins: set[int] = {idx}
    if kind == "bead" and profile.drag_hops is not None and scene.bag_of_ring(oid) is not None:
        cab = body  # type: ignore[assignment]
        hops = _hop_distance(cab.n, idx, cab.closed)
        pins |= {int(i) for i in np.flatnonzero(hops > profile.drag_hops)}
        if pins != {idx}:
            # the held bead cannot outrun the links to the nearest pinned beads
            k = profile.drag_hops + 1
            anchors = cab.pos[[(idx - k) % cab.n, (idx + k) % cab.n]]
            target = _within_reach(target, anchors, TAUT_FRACTION * k * cab.rest)
    pinned = {oid: pins}

    start = body.pos[idx].copy()
    for s in range(1, params.substeps + 1):
        body.pos[idx] = start + (s / params.substeps) * (target - start)
        relax_constraints(scene, params.relax_iterations, pinned)
        if kind == "bead" and len(pins) == 1:
            follow_the_leader(body, idx)  # type: ignore[arg-type]
    # released: pins no longer hold
    relax_constraints(scene, RELEASE_SWEEPS * params.relax_iterations)


def execute_pick_place(scene: Scene, a: PickPlaceAction, params: MotionParams) -> tuple[Scene, MotionEvent]:
    """Apply one pick-and-place. Returns a new scene; a missed grasp returns ``scene`` itself.

    The grasped bead or vertex is displaced by ``place - pick``; rigid items also
    rotate about the grasp point by ``place.theta - pick.theta``.
    """
    vals = a.as_array()
    if not np.all(np.isfinite(vals)):
        raise ArgumentError(f"non-finite action {vals}")
    handle = attach_nearest(scene, a.pick.xy, params)
    if handle is None:
        return scene, MotionEvent.MISSED

    nxt = scene.copy()
    if handle.kind == "item":
        _move_item(nxt, nxt.item(handle.obj_id), a)
    else:
        _drag(nxt, handle.kind, handle.obj_id, handle.index, a, params)
    nxt.clamp()
    log.debug("sim.pick_place", kind=handle.kind, obj=handle.obj_id, index=handle.index, stage=nxt.stage.name)
    return nxt, MotionEvent.MOVED


def perturb_scene(scene: Scene, rng: np.random.Generator, magnitude: float, iterations: int = 60) -> Scene:
    """Crumple every cable: fold it across a random chord near its centroid, jitter, relax.

    The chord sits ``max(0, 1 - magnitude * U(1.4, 1.8)) * r`` from the centroid, ``r`` the
    cable's largest centroid distance, so larger magnitudes fold closer to the middle. Folding
    keeps every link length, so a folded ring loses hull area without slack.
    """
    if magnitude < 0.0:
        raise ArgumentError(f"magnitude must be >= 0, got {magnitude}")
    out = scene.copy()
    if magnitude == 0.0:
        return out
    for cab in out.cables:
        phi = rng.uniform(0.0, 2.0 * math.pi)
        normal = np.array([math.cos(phi), math.sin(phi)])
        c = cab.pos.mean(axis=0)
        r = float(np.max(np.linalg.norm(cab.pos - c, axis=1)))
        off = (cab.pos - c) @ normal - max(0.0, 1.0 - magnitude * rng.uniform(1.4, 1.8)) * r
        flip = off > 0.0
        cab.pos[flip] -= 2.0 * off[flip, None] * normal
        cab.pos = cab.pos + rng.normal(0.0, 0.2 * magnitude * cab.rest, size=cab.pos.shape)
    for fab in out.fabrics:
        fab.pos = fab.pos + rng.normal(0.0, 0.1 * magnitude * fab.spacing, size=fab.pos.shape)
    out.clamp()
    relax_constraints(out, iterations)
    return out


def fabric_height(layer: int) -> float:
    return FABRIC_THICKNESS * (layer + 1)
