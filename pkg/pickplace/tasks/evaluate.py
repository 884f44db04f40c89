# pickplace/tasks/evaluate.py
"""Success checks and stage bookkeeping per task family."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ArgumentError
from ..geometry import convex_hull, inside_convex
from ..models import EvalResult
from ..render import item_mask, render_segmentation
from ..sim.scene import BEAD_RADIUS, Bag, Cable, RigidItem, Scene, Stage
from ..spatial import wrap_angle
from .metrics import convex_hull_area, fabric_coverage, zone_bead_fraction, zone_of
from .registry import RING_AREA_THRESHOLD, GoalSpec, TaskSpec


def _ring(scene: Scene) -> Cable:
    for c in scene.cables:
        if c.closed:
            return c
    raise ArgumentError("scene has no closed cable")


def _open_cable(scene: Scene) -> Cable:
    for c in scene.cables:
        if not c.closed:
            return c
    raise ArgumentError("scene has no open cable")


def _goal_scene(goal: GoalSpec | None, task_id: str) -> Scene:
    if goal is None or goal.scene is None:
        raise ArgumentError(f"{task_id} needs a goal scene")
    return goal.scene


def target_bag(scene: Scene, goal: GoalSpec | None) -> Bag:
    """Bag in ``scene`` whose colour matches the bag that holds the item in the goal."""
    gs = _goal_scene(goal, "bag-color-goal")
    want = next((b.color for b in gs.bags if b.items), None)
    if want is None:
        raise ArgumentError("goal scene has no filled bag")
    for b in scene.bags:
        if tuple(b.color) == tuple(want):
            return b
    raise ArgumentError(f"no bag with colour {want}")


def _bag_area(scene: Scene, bag: Bag) -> float:
    return convex_hull_area(scene.cable(bag.ring_id).pos)


def _items_in(scene: Scene, poly: np.ndarray, items: list[RigidItem]) -> int:
    if not items or len(poly) < 3:
        return 0
    return int(inside_convex(np.array([it.center for it in items]), poly).sum())


def _cover_fraction(scene: Scene, cube: RigidItem) -> float:
    footprint = int(item_mask(cube, scene.calib).sum())
    if footprint == 0:
        return 0.0
    visible = int((render_segmentation(scene) == cube.id).sum())
    return 1.0 - visible / footprint


def _block_errors(scene: Scene, goal: GoalSpec | None) -> tuple[float, float]:
    gs = _goal_scene(goal, "block-notarget")
    cur, want = scene.items[0], gs.items[0]
    pos_err = float(np.linalg.norm(cur.center - want.center))
    ang_err = abs(wrap_angle(cur.theta - want.theta))
    ang_err = min(ang_err, 2.0 * math.pi - ang_err)
    return pos_err, ang_err


def evaluate_success(spec: TaskSpec, scene: Scene, goal: GoalSpec | None = None, steps_used: int = 0) -> EvalResult:
    fam = spec.family
    if fam == "ring":
        area = convex_hull_area(_ring(scene).pos)
        return EvalResult(success=area >= spec.threshold, metric=area, steps_used=steps_used)

    if fam == "cable":
        frac = zone_bead_fraction(_open_cable(scene).pos, zone_of(scene, goal), 2.0 * BEAD_RADIUS)
        return EvalResult(success=frac >= 1.0, metric=frac, steps_used=steps_used)

    if fam == "fabric-cover":
        if not scene.items:
            raise ArgumentError("fabric-cover scene has no item")
        covered = _cover_fraction(scene, scene.items[0])
        return EvalResult(success=covered >= 1.0, metric=covered, steps_used=steps_used)

    if fam == "fabric-flat":
        cov = fabric_coverage(scene, zone_of(scene, goal))
        return EvalResult(success=cov >= spec.threshold, metric=cov, steps_used=steps_used)

    if fam == "bag":
        if not scene.bags:
            raise ArgumentError("bag task scene has no bag")
        bag = scene.bags[0]
        if not scene.items:
            area = _bag_area(scene, bag)
            return EvalResult(success=area >= spec.threshold, metric=area, steps_used=steps_used)
        zone = zone_of(scene, goal)
        zpoly = convex_hull(zone.points)
        placed = _items_in(scene, zpoly, scene.items)
        bead_in = bool(inside_convex(scene.cable(bag.ring_id).pos, zpoly).any())
        frac = placed / len(scene.items)
        return EvalResult(success=placed == len(scene.items) and bead_in, metric=frac, steps_used=steps_used)

    if fam == "bag-color":
        bag = target_bag(scene, goal)
        hull = scene.ring_hull(bag)
        frac = _items_in(scene, hull, scene.items) / max(1, len(scene.items))
        return EvalResult(success=frac >= 1.0, metric=frac, steps_used=steps_used)

    if fam == "block":
        pos_err, ang_err = _block_errors(scene, goal)
        # one pixel and one rotation bin, boundaries inclusive
        ok = pos_err <= scene.calib.pixel_size_m + 1e-12 and ang_err <= 2.0 * math.pi / spec.n_rots + 1e-9
        return EvalResult(success=ok, metric=pos_err, steps_used=steps_used)

    raise ArgumentError(f"unknown task family {fam!r}")


def update_stage(spec: TaskSpec, scene: Scene, goal: GoalSpec | None = None) -> Stage:
    """Next stage for ``scene``; stages never move backwards."""
    stage = scene.stage
    if spec.family == "fabric-cover":
        if stage == Stage.FREE and scene.items and scene.fabrics:
            hull = scene.fabrics[0].footprint()
            if any(it.layer > 0 and inside_convex(it.center[None], hull)[0] for it in scene.items):
                return Stage.FABRIC_FOLD
        return stage

    if spec.family == "bag":
        if not scene.bags:
            return stage
        bag = scene.bags[0]
        if stage == Stage.BAG_OPEN and scene.items and _bag_area(scene, bag) >= RING_AREA_THRESHOLD:
            stage = Stage.BAG_INSERT
        if stage == Stage.BAG_INSERT and scene.items:
            if _items_in(scene, scene.ring_hull(bag), scene.items) == len(scene.items):
                stage = Stage.BAG_TRANSPORT
        return stage

    if spec.family == "bag-color":
        if stage == Stage.BAG_OPEN and _bag_area(scene, target_bag(scene, goal)) >= RING_AREA_THRESHOLD:
            return Stage.BAG_INSERT
        return stage

    return stage
