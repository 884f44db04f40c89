# tests/test_tasks.py
from __future__ import annotations

import math

import numpy as np
import pytest

from pickplace.errors import ArgumentError
from pickplace.sim.scene import (
    CABLE_BEADS,
    RING_BEADS,
    Scene,
    Stage,
    Zone,
    cube_parts,
    grid_positions,
    line_positions,
    ring_positions,
)
from pickplace.sim.snapshot import dump_scene
from pickplace.spatial import Pose2
from pickplace.tasks import (
    TASK_IDS,
    GoalSpec,
    evaluate_success,
    get_task,
    reset_task,
    run_episode,
    update_stage,
)
from pickplace.tasks.metrics import convex_hull_area, fabric_coverage, zone_bead_fraction


def _rect_zone(x0: float, x1: float, y0: float, y1: float) -> Zone:
    pts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    return Zone("polygon", pts, Pose2((x0 + x1) / 2, (y0 + y1) / 2), True)


# fabric footprint spans x 0.10..0.40, y 0.35..0.65: whole pixels at 6.25 mm
FABRIC_CENTER = np.array([0.25, 0.5])


def _flat_fabric(calib, shift_y: float = 0.0) -> Scene:
    scene = Scene(calib)
    scene.add_fabric(grid_positions(FABRIC_CENTER + [0.0, shift_y], 0.0))
    return scene


class TestTaskTable:
    def test_max_steps(self):
        steps = [get_task(t).max_steps for t in TASK_IDS]
        assert steps == [20, 20, 20, 20, 20, 2, 10, 10, 8, 8, 9, 8, 2]

    def test_unknown_task(self):
        with pytest.raises(ArgumentError):
            get_task("cable-knot")

    def test_max_steps_override(self):
        assert get_task("cable-ring", 3).max_steps == 3
        with pytest.raises(ArgumentError):
            get_task("cable-ring", 0)


class TestConvexHullArea:
    def test_unit_square(self):
        assert convex_hull_area(np.array([[0, 0], [1, 0], [1, 1], [0, 1]])) == pytest.approx(1.0)

    def test_interior_points_ignored(self, rng):
        pts = np.vstack([[[0, 0], [1, 0], [1, 1], [0, 1]], rng.uniform(0.1, 0.9, size=(20, 2))])
        assert convex_hull_area(pts) == pytest.approx(1.0)

    def test_regular_32_gon(self):
        r = 0.1
        a = np.arange(32) * 2 * math.pi / 32
        pts = r * np.stack([np.cos(a), np.sin(a)], axis=1)
        assert convex_hull_area(pts) == pytest.approx(0.5 * 32 * r * r * math.sin(2 * math.pi / 32), abs=1e-9)

    @pytest.mark.parametrize("pts", [[[0, 0], [1, 1]], [[0, 0], [1, 1], [2, 2], [3, 3]]])
    def test_degenerate(self, pts):
        assert convex_hull_area(np.array(pts, dtype=float)) == 0.0


class TestZoneBeadFraction:
    LINE = np.array([[0.25, 0.3], [0.25, 0.76]])

    def test_all_on_line(self):
        beads = line_positions(np.array([0.25, 0.3]), math.pi / 2, CABLE_BEADS)
        assert zone_bead_fraction(beads, self.LINE, 0.02) == 1.0

    def test_all_far(self):
        beads = line_positions(np.array([0.4, 0.3]), math.pi / 2, CABLE_BEADS)
        assert zone_bead_fraction(beads, self.LINE, 0.02) == 0.0

    def test_half(self):
        beads = line_positions(np.array([0.25, 0.3]), math.pi / 2, CABLE_BEADS)
        beads[::2, 0] += 0.05
        assert zone_bead_fraction(beads, self.LINE, 0.02) == pytest.approx(0.5)

    def test_empty_zone(self):
        with pytest.raises(ArgumentError):
            zone_bead_fraction(np.zeros((3, 2)), np.zeros((0, 2)), 0.02)


class TestFabricCoverage:
    def test_exact_cover(self, calib):
        scene = _flat_fabric(calib)
        assert fabric_coverage(scene, _rect_zone(0.1, 0.4, 0.35, 0.65)) == pytest.approx(1.0, abs=0.05)

    def test_disjoint(self, calib):
        scene = _flat_fabric(calib)
        assert fabric_coverage(scene, _rect_zone(0.1, 0.4, 0.7, 1.0)) == 0.0

    def test_half_overlap(self, calib):
        scene = _flat_fabric(calib)
        assert fabric_coverage(scene, _rect_zone(0.1, 0.4, 0.5, 0.8)) == pytest.approx(0.5, abs=0.02)

    def test_empty_zone(self, calib):
        scene = _flat_fabric(calib)
        with pytest.raises(ArgumentError):
            fabric_coverage(scene, _rect_zone(0.2, 0.2001, 0.5, 0.5001))


class TestEvaluateSuccess:
    def test_fabric_flat_above_threshold(self, calib):
        scene = _flat_fabric(calib, shift_y=0.0375)
        scene.zones.append(_rect_zone(0.1, 0.4, 0.35, 0.65))
        res = evaluate_success(get_task("fabric-flat"), scene)
        assert res.success
        assert res.metric > 0.85

    def test_fabric_flat_below_threshold(self, calib):
        scene = _flat_fabric(calib, shift_y=0.075)
        scene.zones.append(_rect_zone(0.1, 0.4, 0.35, 0.65))
        res = evaluate_success(get_task("fabric-flat"), scene)
        assert not res.success
        assert res.metric == pytest.approx(0.75, abs=0.03)

    def test_cable_shape_needs_every_bead(self, calib):
        scene = Scene(calib)
        cab = scene.add_cable(line_positions(np.array([0.25, 0.3]), math.pi / 2, CABLE_BEADS))
        scene.zones.append(Zone("polyline", np.array([[0.25, 0.3], [0.25, 0.76]]), Pose2(0.25, 0.3), True))
        spec = get_task("cable-shape")
        assert evaluate_success(spec, scene).success
        cab.pos[10, 0] += 0.05
        res = evaluate_success(spec, scene)
        assert not res.success
        assert res.metric == pytest.approx(23 / 24)

    def test_ring_open(self, calib):
        scene = Scene(calib)
        scene.add_cable(ring_positions(np.array([0.25, 0.5])), closed=True)
        assert evaluate_success(get_task("cable-ring"), scene).success

    def test_bag_color_wrong_bag(self, calib):
        red, blue = (0.9, 0.1, 0.1), (0.1, 0.2, 0.9)

        def layout() -> Scene:
            s = Scene(calib)
            s.add_bag(s.add_cable(ring_positions(np.array([0.25, 0.3])), closed=True), red)
            s.add_bag(s.add_cable(ring_positions(np.array([0.25, 0.7])), closed=True), blue)
            return s

        goal_scene = layout()
        goal_item = goal_scene.add_item(Pose2(0.25, 0.7), cube_parts())
        goal_scene.bags[1].items.add(goal_item.id)
        goal = GoalSpec(image=None, scene=goal_scene)
        spec = get_task("bag-color-goal")

        scene = layout()
        scene.add_item(Pose2(0.25, 0.3), cube_parts())
        assert not evaluate_success(spec, scene, goal).success
        scene.items[0].y = 0.7
        assert evaluate_success(spec, scene, goal).success

    def test_block_pose_tolerance(self, calib):
        goal_scene = Scene(calib)
        goal_scene.add_item(Pose2(0.25, 0.5, 0.0), cube_parts())
        goal = GoalSpec(image=None, scene=goal_scene)
        spec = get_task("block-notarget")
        px, bin_ = calib.pixel_size_m, 2 * math.pi / 24
        scene = Scene(calib)
        scene.add_item(Pose2(0.25, 0.5, 0.7 * bin_), cube_parts())
        assert evaluate_success(spec, scene, goal).success
        scene.items[0].theta = bin_
        assert evaluate_success(spec, scene, goal).success
        scene.items[0].theta = 1.2 * bin_
        assert not evaluate_success(spec, scene, goal).success
        scene.items[0].theta = 0.0
        scene.items[0].x = 0.25 + 0.9 * px
        assert evaluate_success(spec, scene, goal).success
        scene.items[0].x = 0.25 + 1.3 * px
        assert not evaluate_success(spec, scene, goal).success
        scene.items[0].x, scene.items[0].y = 0.25 + 0.8 * px, 0.5 + 0.8 * px
        assert not evaluate_success(spec, scene, goal).success

    def test_mismatched_scene(self, calib):
        scene = Scene(calib)
        scene.add_cable(ring_positions(np.array([0.25, 0.5])), closed=True)
        with pytest.raises(ArgumentError):
            evaluate_success(get_task("cable-shape"), scene)


class TestReset:
    def test_cable_ring_layout(self, calib):
        scene, goal = reset_task(get_task("cable-ring"), np.random.default_rng(3), calib)
        assert len(scene.cables) == 1
        assert scene.cables[0].closed and scene.cables[0].n == RING_BEADS
        assert len(scene.zones[0].points) == RING_BEADS
        assert goal.image is None

    def test_fabric_flat_notarget_layout(self, calib):
        scene, goal = reset_task(get_task("fabric-flat-notarget"), np.random.default_rng(3), calib)
        assert scene.fabrics[0].pos.shape == (100, 2)
        assert np.all(scene.fabrics[0].layer == 0)
        assert not scene.zones
        assert goal.image is not None and goal.image.shape[:2] == calib.shape
        assert goal.scene is not None

    def test_bag_color_goal_keeps_bag_positions(self, calib):
        scene, goal = reset_task(get_task("bag-color-goal"), np.random.default_rng(5), calib)
        for bag in scene.bags:
            twin = next(b for b in goal.scene.bags if b.color == bag.color)
            assert np.linalg.norm(bag.origin - twin.origin) < 1e-9

    @pytest.mark.parametrize("task_id", TASK_IDS)
    def test_same_seed_same_scene(self, calib, task_id):
        spec = get_task(task_id)
        a, ga = reset_task(spec, np.random.default_rng(11), calib)
        b, gb = reset_task(spec, np.random.default_rng(11), calib)
        assert dump_scene(a) == dump_scene(b)
        if spec.goal_conditioned:
            np.testing.assert_array_equal(ga.image, gb.image)
        else:
            assert ga.image is None
        assert not evaluate_success(spec, a, ga).success


class _Idle:
    def act(self, spec, scene, goal, obs, rng):
        return None


def test_idle_policy_episode(calib):
    trace = run_episode(get_task("cable-ring"), _Idle(), seed=4, calib=calib)
    assert trace.length == 0
    assert len(trace.observations) == 1
    assert not trace.result.success


class TestUpdateStage:
    def test_cube_on_fabric_starts_fold(self, calib):
        scene = _flat_fabric(calib)
        item = scene.add_item(Pose2(0.25, 0.5), cube_parts())
        spec = get_task("fabric-cover")
        assert update_stage(spec, scene) == Stage.FREE
        item.layer = 1
        assert update_stage(spec, scene) == Stage.FABRIC_FOLD

    def _bag_scene(self, calib, item_y: float) -> Scene:
        scene = Scene(calib)
        scene.add_bag(scene.add_cable(ring_positions(np.array([0.25, 0.5])), closed=True), (0.2, 0.4, 0.95))
        scene.add_item(Pose2(0.25, item_y), cube_parts())
        scene.stage = Stage.BAG_OPEN
        return scene

    def test_open_bag_moves_to_insert(self, calib):
        scene = self._bag_scene(calib, 0.9)
        assert update_stage(get_task("bag-items-1"), scene) == Stage.BAG_INSERT

    def test_item_inside_moves_to_transport(self, calib):
        scene = self._bag_scene(calib, 0.5)
        assert update_stage(get_task("bag-items-1"), scene) == Stage.BAG_TRANSPORT

    def test_never_moves_back(self, calib):
        scene = self._bag_scene(calib, 0.9)
        scene.stage = Stage.BAG_TRANSPORT
        assert update_stage(get_task("bag-items-1"), scene) == Stage.BAG_TRANSPORT
