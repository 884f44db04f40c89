# pickplace/oracle.py
"""Scripted demonstrators that act from ground-truth scene state."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import structlog

from .errors import ArgumentError, LogicError
from .geometry import convex_hull, inside_convex, points_along
from .render import render_segmentation
from .sim.motion import PickPlaceAction
from .sim.scene import CABLE_BEADS, LINK_LENGTH, Cable, Scene, Stage
from .spatial import Pose2, pixel_to_world, rot2, wrap_angle
from .tasks.evaluate import evaluate_success, target_bag
from .tasks.metrics import zone_of
from .tasks.registry import GoalSpec, TaskSpec

log = structlog.get_logger(__name__)

INSERT_TRIES = 100


@dataclass(frozen=True)
class RingAssignment:
    orientation: Literal["forward", "reversed"]
    offset: int
    targets: np.ndarray
    cost: float


def best_ring_assignment(beads: np.ndarray, targets: np.ndarray) -> RingAssignment:
    """Cheapest cyclic-order-preserving matching of beads to targets.

    Forward maps bead ``i`` to target ``(i + offset) mod n``, reversed to
    ``(offset - i) mod n``. Ties keep the smallest offset, forward first.
    """
    b = np.asarray(beads, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if len(b) != len(t):
        raise ArgumentError(f"{len(b)} beads vs {len(t)} targets")
    n = len(b)
    if n < 3:
        raise ArgumentError("ring assignment needs at least 3 beads")
    idx = np.arange(n)
    best: RingAssignment | None = None
    for offset in range(n):
        for orientation in ("forward", "reversed"):
            perm = (idx + offset) % n if orientation == "forward" else (offset - idx) % n
            cost = float(np.linalg.norm(b - t[perm], axis=1).sum())
            if best is None or cost < best.cost:
                best = RingAssignment(orientation, offset, t[perm], cost)  # type: ignore[arg-type]
    assert best is not None
    return best


def ideal_ring(beads: np.ndarray, rest: float = LINK_LENGTH) -> np.ndarray:
    """Target circle at the bead centroid whose circumference equals the ring's rest length."""
    n = len(beads)
    radius = n * rest / (2.0 * math.pi)
    a = np.arange(n) * 2.0 * math.pi / n
    return beads.mean(axis=0) + radius * np.stack([np.cos(a), np.sin(a)], axis=1)


def sample_pick_pixel(mask: np.ndarray, obj_id: int, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform draw over the pixels labelled ``obj_id``."""
    ids = np.flatnonzero(np.asarray(mask).ravel() == obj_id)
    if ids.size == 0:
        raise ArgumentError(f"object {obj_id} is not visible")
    k = int(ids[int(rng.integers(ids.size))])
    u, v = divmod(k, mask.shape[1])
    return int(u), int(v)


def _pick_near(
    scene: Scene, seg: np.ndarray, obj_id: int, verts: np.ndarray, i: int, radius: float, rng: np.random.Generator
) -> np.ndarray:
    """World pick point on a uniformly drawn visible pixel closest to vertex ``i``.

    Falls back to the vertex itself when none of its pixels are visible.
    """
    c = scene.calib
    us, vs = np.nonzero(seg == obj_id)
    if us.size:
        xs, ys = c.pixel_centers()
        pts = np.stack([xs[us], ys[vs]], axis=1)
        d = np.linalg.norm(pts[:, None, :] - verts[None, :, :], axis=2)
        ok = (np.argmin(d, axis=1) == i) & (d[:, i] <= radius)
        cand = np.flatnonzero(ok)
        if cand.size:
            k = int(cand[int(rng.integers(cand.size))])
            return pixel_to_world((int(us[k]), int(vs[k])), c)
    return verts[i].copy()


def _action(pick: np.ndarray, place: np.ndarray, place_theta: float = 0.0) -> PickPlaceAction:
    return PickPlaceAction(Pose2(float(pick[0]), float(pick[1]), 0.0), Pose2(float(place[0]), float(place[1]), place_theta))


def _drag_vertex(
    scene: Scene, seg: np.ndarray, obj_id: int, verts: np.ndarray, i: int, target: np.ndarray,
    radius: float, rng: np.random.Generator,
) -> PickPlaceAction:
    pick = _pick_near(scene, seg, obj_id, verts, i, radius, rng)
    return _action(pick, target + (pick - verts[i]))


def _ring_step(scene: Scene, seg: np.ndarray, ring: Cable, rng: np.random.Generator) -> PickPlaceAction:
    asg = best_ring_assignment(ring.pos, ideal_ring(ring.pos, ring.rest))
    err = np.linalg.norm(ring.pos - asg.targets, axis=1)
    i = int(np.argmax(err))
    return _drag_vertex(scene, seg, ring.id, ring.pos, i, asg.targets[i], ring.radius, rng)


def _cable_step(scene: Scene, seg: np.ndarray, goal: GoalSpec | None, rng: np.random.Generator) -> PickPlaceAction:
    cab = next(c for c in scene.cables if not c.closed)
    targets = points_along(zone_of(scene, goal).points, LINK_LENGTH, CABLE_BEADS)
    fwd = float(np.linalg.norm(cab.pos - targets, axis=1).sum())
    rev = float(np.linalg.norm(cab.pos - targets[::-1], axis=1).sum())
    if rev < fwd:
        targets = targets[::-1]
    err = np.linalg.norm(cab.pos - targets, axis=1)
    i = int(np.argmax(err))
    return _drag_vertex(scene, seg, cab.id, cab.pos, i, targets[i], cab.radius, rng)


def _item_pick(scene: Scene, seg: np.ndarray, item_id: int, rng: np.random.Generator) -> np.ndarray:
    try:
        return pixel_to_world(sample_pick_pixel(seg, item_id, rng), scene.calib)
    except ArgumentError:
        return scene.item(item_id).center.copy()


def _move_item_to(scene: Scene, seg: np.ndarray, item_id: int, dest: np.ndarray, rng: np.random.Generator) -> PickPlaceAction:
    pick = _item_pick(scene, seg, item_id, rng)
    return _action(pick, dest + (pick - scene.item(item_id).center))


def _fabric_cover_step(scene: Scene, seg: np.ndarray, rng: np.random.Generator) -> PickPlaceAction:
    fab = scene.fabrics[0]
    if scene.stage == Stage.FREE:
        return _move_item_to(scene, seg, scene.items[0].id, fab.pos.mean(axis=0), rng)
    if scene.stage == Stage.FABRIC_FOLD:
        corners = fab.corner_indices()
        k = int(rng.integers(4))
        src, dst = corners[k], corners[(k + 2) % 4]
        return _drag_vertex(scene, seg, fab.id, fab.pos, src, fab.pos[dst].copy(), 0.5 * fab.spacing, rng)
    raise LogicError(f"fabric-cover has no step for stage {scene.stage.name}")


def _fabric_flat_step(scene: Scene, seg: np.ndarray, goal: GoalSpec | None, rng: np.random.Generator) -> PickPlaceAction:
    fab = scene.fabrics[0]
    corner_idx = np.array(fab.corner_indices())
    corners = fab.pos[corner_idx]
    zone_corners = convex_hull(zone_of(scene, goal).points)
    if len(zone_corners) != 4:
        raise ArgumentError("fabric zone must be a quadrilateral")
    asg = best_ring_assignment(corners, zone_corners)
    err = np.linalg.norm(corners - asg.targets, axis=1)
    j = int(np.argmax(err))
    return _drag_vertex(scene, seg, fab.id, fab.pos, int(corner_idx[j]), asg.targets[j], 0.5 * fab.spacing, rng)


def _point_in_hull(hull: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lo, hi = hull.min(axis=0), hull.max(axis=0)
    for _ in range(INSERT_TRIES):
        p = rng.uniform(lo, hi)
        if inside_convex(p[None], hull)[0]:
            return p
    return hull.mean(axis=0)


def _insert_step(scene: Scene, seg: np.ndarray, bag_ring: int, rng: np.random.Generator) -> PickPlaceAction:
    hull = convex_hull(scene.cable(bag_ring).pos)
    outside = [it for it in scene.items if not inside_convex(it.center[None], hull)[0]]
    item = outside[0] if outside else scene.items[0]
    return _move_item_to(scene, seg, item.id, _point_in_hull(hull, rng), rng)


def _transport_step(scene: Scene, seg: np.ndarray, goal: GoalSpec | None, rng: np.random.Generator) -> PickPlaceAction:
    ring = scene.cable(scene.bags[0].ring_id)
    zc = convex_hull(zone_of(scene, goal).points).mean(axis=0)
    i = int(rng.integers(ring.n))
    pick = _pick_near(scene, seg, ring.id, ring.pos, i, ring.radius, rng)
    anchor = np.mean([it.center for it in scene.items], axis=0)
    return _action(pick, pick + (zc - anchor))


def _bag_step(spec: TaskSpec, scene: Scene, seg: np.ndarray, goal: GoalSpec | None, rng: np.random.Generator) -> PickPlaceAction:
    ring = scene.cable(scene.bags[0].ring_id)
    if scene.stage == Stage.BAG_OPEN:
        return _ring_step(scene, seg, ring, rng)
    if scene.stage == Stage.BAG_INSERT:
        return _insert_step(scene, seg, ring.id, rng)
    if scene.stage == Stage.BAG_TRANSPORT:
        return _transport_step(scene, seg, goal, rng)
    raise LogicError(f"{spec.id} has no step for stage {scene.stage.name}")


def _bag_color_step(scene: Scene, seg: np.ndarray, goal: GoalSpec | None, rng: np.random.Generator) -> PickPlaceAction:
    bag = target_bag(scene, goal)
    if scene.stage == Stage.BAG_OPEN:
        return _ring_step(scene, seg, scene.cable(bag.ring_id), rng)
    if scene.stage == Stage.BAG_INSERT:
        return _insert_step(scene, seg, bag.ring_id, rng)
    raise LogicError(f"bag-color-goal has no step for stage {scene.stage.name}")


def _block_step(scene: Scene, seg: np.ndarray, goal: GoalSpec | None, rng: np.random.Generator) -> PickPlaceAction:
    if goal is None or goal.scene is None:
        raise ArgumentError("block-notarget needs a goal scene")
    block, want = scene.items[0], goal.scene.items[0]
    pick = _item_pick(scene, seg, block.id, rng)
    dth = wrap_angle(want.theta - block.theta)
    place = want.center - rot2(dth) @ (block.center - pick)
    return _action(pick, place, dth)


def demonstrator_action(
    spec: TaskSpec, scene: Scene, goal: GoalSpec | None, rng: np.random.Generator
) -> Optional[PickPlaceAction]:
    """Next expert action, or ``None`` once the task is solved."""
    if evaluate_success(spec, scene, goal).success:
        return None
    seg = render_segmentation(scene)
    fam = spec.family
    if fam == "ring":
        ring = next((c for c in scene.cables if c.closed), None)
        if ring is None:
            raise ArgumentError("ring task scene has no closed cable")
        return _ring_step(scene, seg, ring, rng)
    if fam == "cable":
        return _cable_step(scene, seg, goal, rng)
    if fam == "fabric-cover":
        return _fabric_cover_step(scene, seg, rng)
    if fam == "fabric-flat":
        return _fabric_flat_step(scene, seg, goal, rng)
    if fam == "bag":
        return _bag_step(spec, scene, seg, goal, rng)
    if fam == "bag-color":
        return _bag_color_step(scene, seg, goal, rng)
    if fam == "block":
        return _block_step(scene, seg, goal, rng)
    raise LogicError(f"no demonstrator for family {fam!r}")


class DemonstratorPolicy:
    """Adapter so the scripted expert can drive ``run_episode``."""

    name = "demonstrator"

    def act(self, spec: TaskSpec, scene: Scene, goal: GoalSpec, obs: np.ndarray, rng: np.random.Generator):
        return demonstrator_action(spec, scene, goal, rng)


__all__ = [
    "DemonstratorPolicy", "RingAssignment", "best_ring_assignment", "demonstrator_action",
    "ideal_ring", "sample_pick_pixel",
]
