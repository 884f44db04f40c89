# pickplace/tasks/reset.py
"""Seeded initial scenes for every task.

Paired tasks (``cable-ring`` / ``cable-ring-notarget``, ``cable-shape`` /
``cable-shape-notarget``, ``fabric-flat`` / ``fabric-flat-notarget``) draw from the
generator identically, so one seed gives the same layout with or without the visible zone.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
import structlog

from ..errors import ArgumentError
from ..geometry import points_along
from ..render import render_observation
from ..sim.motion import MotionParams, PickPlaceAction, execute_pick_place, perturb_scene
from ..sim.scene import (
    BEAD_RADIUS,
    CABLE_BEADS,
    FABRIC_SIDE,
    LINK_LENGTH,
    RING_BEADS,
    Scene,
    Stage,
    Zone,
    box_part,
    cube_parts,
    grid_positions,
    l_block_parts,
    ring_positions,
)
from ..spatial import TWO_PI, Pose2, WorkspaceCalib
from .evaluate import evaluate_success, update_stage
from .metrics import fabric_coverage
from .registry import COVERAGE_THRESHOLD, GoalSpec, TaskSpec

log = structlog.get_logger(__name__)

BAG_PALETTE: tuple[tuple[float, float, float], ...] = (
    (0.2, 0.4, 0.95),
    (0.95, 0.8, 0.2),
    (0.7, 0.3, 0.9),
    (0.2, 0.85, 0.85),
)
ITEM_COLORS: tuple[tuple[float, float, float], ...] = ((0.85, 0.15, 0.15), (0.9, 0.45, 0.6))
BAG_ZONE_SIDE = 0.24
RESET_RETRIES = 20

Builder = Callable[[Scene, np.random.Generator, float, MotionParams], GoalSpec]


def _frame(c: WorkspaceCalib) -> tuple[np.ndarray, float, float]:
    return np.asarray(c.origin, dtype=np.float64), c.height_m, c.width_m


def _at(c: WorkspaceCalib, fx: float, fy: float) -> np.ndarray:
    lo, h, w = _frame(c)
    return lo + np.array([fx * h, fy * w])


def _square(center: np.ndarray, side: float, theta: float) -> np.ndarray:
    local = box_part(side, side)
    r = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return local @ r.T + center


def _goal_of(scene: Scene) -> GoalSpec:
    return GoalSpec(image=render_observation(scene), scene=scene)


# -- rings ---------------------------------------------------------------------------------


def _ring_builder(visible: bool) -> Builder:
    def build(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
        center = _at(scene.calib, rng.uniform(0.4, 0.6), rng.uniform(0.25, 0.75))
        phase = rng.uniform(0.0, TWO_PI / RING_BEADS)
        ideal = ring_positions(center, RING_BEADS, LINK_LENGTH, phase)
        scene.add_cable(ideal, closed=True)
        if visible:
            scene.zones.append(Zone("points", ideal.copy(), Pose2(float(center[0]), float(center[1]), 0.0), True))
        crumpled = perturb_scene(scene, rng, magnitude)
        scene.cables = crumpled.cables
        return GoalSpec()

    return build


# -- cables --------------------------------------------------------------------------------


def _polyline(rng: np.random.Generator, c: WorkspaceCalib, n_seg: int, margin: float) -> np.ndarray:
    total = (CABLE_BEADS - 1) * LINK_LENGTH
    lo, h, w = _frame(c)
    for _ in range(50):
        weights = rng.uniform(0.5, 1.0, size=n_seg)
        lengths = total * weights / weights.sum()
        heading = rng.uniform(0.0, TWO_PI)
        pts = [np.zeros(2)]
        for k, length in enumerate(lengths):
            if k > 0:
                heading += rng.uniform(-math.pi / 3.0, math.pi / 3.0)
            pts.append(pts[-1] + length * np.array([math.cos(heading), math.sin(heading)]))
        line = np.array(pts)
        span = line.max(axis=0) - line.min(axis=0)
        room = np.array([h, w]) - 2.0 * margin - span
        if np.all(room > 0):
            start = lo + margin - line.min(axis=0) + rng.uniform(0.0, 1.0, size=2) * room
            return line + start
    raise ArgumentError("could not fit a cable path inside the workspace")


def _cable_builder(visible: bool, n_segments: tuple[int, int]) -> Builder:
    def build(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
        n_seg = int(rng.integers(n_segments[0], n_segments[1] + 1))
        line = _polyline(rng, scene.calib, n_seg, margin=0.08)
        targets = points_along(line, LINK_LENGTH, CABLE_BEADS)
        zone = Zone("polyline", line, Pose2(float(line[0, 0]), float(line[0, 1]), 0.0), visible, 2.0 * BEAD_RADIUS)

        goal_scene = Scene(scene.calib)
        goal_scene.add_cable(targets)
        goal_scene.zones.append(Zone("polyline", line.copy(), zone.pose, False, zone.width))

        scene.add_cable(targets)
        scene.zones.append(zone)
        cur = scene
        for _ in range(int(rng.integers(2, 4))):
            cab = cur.cables[0]
            i = int(rng.integers(cab.n))
            phi = rng.uniform(0.0, TWO_PI)
            dist = rng.uniform(0.04, 0.10) * (0.5 + magnitude)
            src = cab.pos[i].copy()
            dst = scene.calib.clamp(src + dist * np.array([math.cos(phi), math.sin(phi)]))
            a = PickPlaceAction(Pose2(float(src[0]), float(src[1]), 0.0), Pose2(float(dst[0]), float(dst[1]), 0.0))
            cur, _ = execute_pick_place(cur, a, params)
        scene.cables = cur.cables
        if visible:
            return GoalSpec()
        scene.zones.clear()
        return _goal_of(goal_scene)

    return build


# -- fabric --------------------------------------------------------------------------------


def _fabric_flat_builder(visible: bool) -> Builder:
    def build(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
        zc = _at(scene.calib, 0.5 + rng.uniform(-0.02, 0.02), rng.uniform(0.35, 0.65))
        zt = rng.uniform(-math.pi / 18.0, math.pi / 18.0)
        zone = Zone("polygon", _square(zc, FABRIC_SIDE, zt), Pose2(float(zc[0]), float(zc[1]), zt), True)
        fab = scene.add_fabric(grid_positions(zc, zt))
        for _ in range(RESET_RETRIES):
            dx = rng.uniform(-0.03, 0.03)
            dy = rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 0.10)
            dt = rng.uniform(-math.pi / 9.0, math.pi / 9.0)
            fab.pos = scene.calib.clamp(grid_positions(zc + np.array([dx, dy]), zt + dt))
            if fabric_coverage(scene, zone) < COVERAGE_THRESHOLD:
                break
        goal_scene = Scene(scene.calib)
        goal_scene.add_fabric(grid_positions(zc, zt))
        goal_scene.zones.append(Zone("polygon", zone.points.copy(), zone.pose, False))
        if visible:
            scene.zones.append(zone)
            return GoalSpec()
        return _goal_of(goal_scene)

    return build


def _fabric_cover(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
    side = int(rng.integers(2))
    fy = (0.3 if side == 0 else 0.7) + rng.uniform(-0.03, 0.03)
    fc = _at(scene.calib, 0.5 + rng.uniform(-0.04, 0.04), fy)
    scene.add_fabric(grid_positions(fc, rng.uniform(-math.pi / 12.0, math.pi / 12.0)))
    cy = rng.uniform(0.75, 0.85) if side == 0 else rng.uniform(0.15, 0.25)
    cc = _at(scene.calib, rng.uniform(0.3, 0.7), cy)
    scene.add_item(Pose2(float(cc[0]), float(cc[1]), rng.uniform(0.0, math.pi / 2.0)), cube_parts())
    return GoalSpec()


# -- bags ----------------------------------------------------------------------------------


def _add_bag(scene: Scene, center: np.ndarray, color: tuple[float, float, float], rng: np.random.Generator) -> None:
    ring = scene.add_cable(ring_positions(center, RING_BEADS, LINK_LENGTH, rng.uniform(0.0, TWO_PI / RING_BEADS)), closed=True)
    scene.add_bag(ring, color)


def _slot(scene: Scene, k: int, rng: np.random.Generator) -> np.ndarray:
    return _at(scene.calib, 0.5 + rng.uniform(-0.03, 0.03), (0.2, 0.5, 0.8)[k] + rng.uniform(-0.02, 0.02))


def _item_parts(rng: np.random.Generator, j: int) -> list[np.ndarray]:
    if j == 0:
        return cube_parts()
    kind = int(rng.integers(2))
    return cube_parts() if kind == 0 else [box_part(0.04, 0.025)]


def _bag_builder(n_items: int) -> Builder:
    def build(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
        slots = rng.permutation(3)
        _add_bag(scene, _slot(scene, int(slots[0]), rng), BAG_PALETTE[0], rng)
        if n_items:
            zc = _slot(scene, int(slots[1]), rng)
            zt = rng.uniform(-math.pi / 12.0, math.pi / 12.0)
            scene.zones.append(Zone("polygon", _square(zc, BAG_ZONE_SIDE, zt), Pose2(float(zc[0]), float(zc[1]), zt), True))
            ic = _slot(scene, int(slots[2]), rng)
            for j in range(n_items):
                off = np.array([(j - (n_items - 1) / 2.0) * 0.12, rng.uniform(-0.02, 0.02)])
                p = scene.calib.clamp(ic + off)
                scene.add_item(Pose2(float(p[0]), float(p[1]), rng.uniform(0.0, math.pi / 2.0)),
                               _item_parts(rng, j), color=ITEM_COLORS[j % len(ITEM_COLORS)])
        scene.cables = perturb_scene(scene, rng, magnitude).cables
        scene.stage = Stage.BAG_OPEN
        return GoalSpec()

    return build


def _bag_color(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
    slots = rng.permutation(3)
    colors = rng.choice(len(BAG_PALETTE), size=2, replace=False)
    target = int(rng.integers(2))
    centers = [_slot(scene, int(slots[0]), rng), _slot(scene, int(slots[1]), rng)]
    for k in range(2):
        _add_bag(scene, centers[k], BAG_PALETTE[int(colors[k])], rng)
    ic = _slot(scene, int(slots[2]), rng)
    item = scene.add_item(Pose2(float(ic[0]), float(ic[1]), rng.uniform(0.0, math.pi / 2.0)), cube_parts())

    goal_scene = scene.copy()
    goal_item = goal_scene.item(item.id)
    goal_item.x, goal_item.y = float(centers[target][0]), float(centers[target][1])
    goal_scene.bags[target].items.add(item.id)

    scene.cables = perturb_scene(scene, rng, magnitude).cables
    scene.stage = Stage.BAG_OPEN
    goal_scene.stage = Stage.BAG_INSERT
    return _goal_of(goal_scene)


# -- block ---------------------------------------------------------------------------------


def _block(scene: Scene, rng: np.random.Generator, magnitude: float, params: MotionParams) -> GoalSpec:
    def draw() -> Pose2:
        p = _at(scene.calib, rng.uniform(0.3, 0.7), rng.uniform(0.15, 0.85))
        return Pose2(float(p[0]), float(p[1]), int(rng.integers(24)) * TWO_PI / 24)

    goal_pose = draw()
    pose = draw()
    for _ in range(50):
        if np.linalg.norm(pose.xy - goal_pose.xy) >= 0.15:
            break
        pose = draw()
    goal_scene = scene.copy()
    goal_scene.add_item(goal_pose, l_block_parts(), color=ITEM_COLORS[0])
    scene.add_item(pose, l_block_parts(), color=ITEM_COLORS[0])
    return _goal_of(goal_scene)


BUILDERS: dict[str, Builder] = {
    "cable-ring": _ring_builder(True),
    "cable-ring-notarget": _ring_builder(False),
    "cable-shape": _cable_builder(True, (2, 4)),
    "cable-shape-notarget": _cable_builder(False, (2, 4)),
    "cable-line-notarget": _cable_builder(False, (1, 1)),
    "fabric-cover": _fabric_cover,
    "fabric-flat": _fabric_flat_builder(True),
    "fabric-flat-notarget": _fabric_flat_builder(False),
    "bag-alone-open": _bag_builder(0),
    "bag-items-1": _bag_builder(1),
    "bag-items-2": _bag_builder(2),
    "bag-color-goal": _bag_color,
    "block-notarget": _block,
}


def reset_task(
    spec: TaskSpec,
    rng: np.random.Generator,
    calib: WorkspaceCalib | None = None,
    magnitude: float = 0.5,
    params: MotionParams | None = None,
) -> tuple[Scene, GoalSpec]:
    """Build the initial scene and goal for ``spec``; retries layouts that start solved."""
    try:
        build = BUILDERS[spec.id]
    except KeyError:
        raise ArgumentError(f"no scene builder for {spec.id!r}") from None
    calib = calib or WorkspaceCalib()
    params = params or MotionParams()
    scene, goal = Scene(calib), GoalSpec()
    for attempt in range(RESET_RETRIES):
        scene = Scene(calib)
        goal = build(scene, rng, magnitude, params)
        scene.stage = update_stage(spec, scene, goal)
        if not evaluate_success(spec, scene, goal).success:
            return scene, goal
        log.debug("task.reset_solved", task=spec.id, attempt=attempt)
    return scene, goal
