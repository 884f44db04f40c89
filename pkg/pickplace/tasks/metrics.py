# pickplace/tasks/metrics.py
from __future__ import annotations

import numpy as np

from ..errors import ArgumentError
from ..geometry import hull_area, polyline_distance
from ..render import fabric_mask, zone_mask
from ..sim.scene import Scene, Zone
from .registry import GoalSpec


def convex_hull_area(points: np.ndarray) -> float:
    """Hull area in m^2; fewer than three points or a collinear set give 0."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        return 0.0
    return hull_area(pts)


def zone_bead_fraction(beads: np.ndarray, zone: Zone | np.ndarray, tol_m: float) -> float:
    line = zone.points if isinstance(zone, Zone) else np.asarray(zone, dtype=np.float64)
    if len(line) == 0:
        raise ArgumentError("empty zone polyline")
    b = np.asarray(beads, dtype=np.float64).reshape(-1, 2)
    if len(b) == 0:
        return 0.0
    return float(np.mean(polyline_distance(b, line) <= tol_m))


def zone_of(scene: Scene, goal: GoalSpec | None) -> Zone:
    """The task zone: visible in the scene, or carried by the goal scene."""
    if scene.zones:
        return scene.zones[0]
    if goal is not None and goal.scene is not None and goal.scene.zones:
        return goal.scene.zones[0]
    raise ArgumentError("scene has no zone and the goal carries none")


def fabric_coverage(scene: Scene, zone: Zone | None = None) -> float:
    if len(scene.fabrics) != 1:
        raise ArgumentError(f"coverage needs exactly one fabric, scene has {len(scene.fabrics)}")
    z = zone if zone is not None else zone_of(scene, None)
    zm = zone_mask(Zone("polygon", z.points, z.pose, True), scene.calib)
    total = int(zm.sum())
    if total == 0:
        raise ArgumentError("zone rasterizes to zero pixels")
    fm = fabric_mask(scene.fabrics[0], scene.calib)
    return float((zm & fm).sum()) / total
