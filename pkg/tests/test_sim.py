# tests/test_sim.py
from __future__ import annotations

import math

import numpy as np
import pytest

from pickplace.errors import ArgumentError
from pickplace.geometry import hull_area
from pickplace.sim.motion import (
    GraspHandle,
    MotionEvent,
    PickPlaceAction,
    attach_nearest,
    execute_pick_place,
    perturb_scene,
)
from pickplace.sim.scene import (
    CABLE_BEADS,
    LINK_LENGTH,
    Scene,
    Stage,
    cube_parts,
    grid_positions,
    line_positions,
    ring_positions,
)
from pickplace.sim.snapshot import dump_scene, load_scene, load_scene_bytes, save_scene
from pickplace.sim.solver import follow_the_leader, max_link_residual, relax_constraints
from pickplace.spatial import Pose2
from pickplace.tasks import TASK_IDS, get_task, reset_task, update_stage
from pickplace.tasks.registry import RING_AREA_THRESHOLD


def _move(pick, place, dtheta: float = 0.0) -> PickPlaceAction:
    return PickPlaceAction(Pose2(pick[0], pick[1]), Pose2(place[0], place[1], dtheta))


def _straight_cable(scene: Scene, n: int = CABLE_BEADS):
    return scene.add_cable(line_positions(np.array([0.25, 0.3]), math.pi / 2, n))


class TestAttachNearest:
    def test_exact_bead(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        h = attach_nearest(empty_scene, cab.pos[5], params)
        assert h == GraspHandle("bead", cab.id, 5)

    def test_empty_scene(self, empty_scene, params):
        assert attach_nearest(empty_scene, np.array([0.25, 0.5]), params) is None

    def test_out_of_radius(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        assert attach_nearest(empty_scene, cab.pos[0] + np.array([0.1, 0.0]), params) is None

    @pytest.mark.parametrize("cable_first", [True, False])
    def test_tie_goes_to_lowest_object_id(self, empty_scene, params, cable_first):
        grid = grid_positions(np.array([0.25, 0.5]), 0.0)
        v = grid[7]
        p = v + np.array([0.005, 0.0])
        bead3 = v + np.array([0.01, 0.0])
        chain = line_positions(bead3 - np.array([0.0, 3 * LINK_LENGTH]), math.pi / 2, 5)
        if cable_first:
            first = empty_scene.add_cable(chain)
            empty_scene.add_fabric(grid)
            expected = GraspHandle("bead", first.id, 3)
        else:
            first = empty_scene.add_fabric(grid)
            empty_scene.add_cable(chain)
            expected = GraspHandle("vertex", first.id, 7)
        assert attach_nearest(empty_scene, p, params) == expected

    def test_item_footprint(self, empty_scene, params):
        it = empty_scene.add_item(Pose2(0.25, 0.5), cube_parts())
        assert attach_nearest(empty_scene, np.array([0.26, 0.51]), params) == GraspHandle("item", it.id, 0)


class TestExecutePickPlace:
    def test_missed_grasp_returns_same_scene(self, empty_scene, params):
        out, event = execute_pick_place(empty_scene, _move((0.25, 0.5), (0.3, 0.5)), params)
        assert event == MotionEvent.MISSED
        assert out is empty_scene

    def test_same_pose_is_a_no_op(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        before = cab.pos.copy()
        out, event = execute_pick_place(empty_scene, _move(cab.pos[4], cab.pos[4]), params)
        assert event == MotionEvent.MOVED
        np.testing.assert_allclose(out.cables[0].pos, before, atol=1e-6)

    def test_input_scene_untouched(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        before = cab.pos.copy()
        execute_pick_place(empty_scene, _move(cab.pos[0], (0.25, 0.1)), params)
        np.testing.assert_array_equal(empty_scene.cables[0].pos, before)

    def test_single_bead_lands_on_target(self, empty_scene, params):
        empty_scene.add_cable(np.array([[0.2, 0.4]]))
        out, _ = execute_pick_place(empty_scene, _move((0.2, 0.4), (0.3, 0.7)), params)
        np.testing.assert_allclose(out.cables[0].pos[0], [0.3, 0.7], atol=1e-9)

    def test_cable_drag_keeps_length(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        out, _ = execute_pick_place(empty_scene, _move(cab.pos[0], (0.25, 0.1)), params)
        moved = out.cables[0]
        rest_total = (CABLE_BEADS - 1) * LINK_LENGTH
        assert abs(moved.link_lengths().sum() - rest_total) <= 0.05 * rest_total
        assert max_link_residual(out) <= 0.2
        np.testing.assert_allclose(moved.pos[0], [0.25, 0.1], atol=1e-9)

    def test_sideways_drag_stays_within_link_tolerance(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        out, _ = execute_pick_place(empty_scene, _move(cab.pos[12], (0.45, cab.pos[12][1])), params)
        assert max_link_residual(out) <= 0.2
        assert np.all(out.cables[0].pos >= 0.0)

    def test_item_rotates_about_grasp(self, empty_scene, params):
        empty_scene.add_item(Pose2(0.25, 0.5), cube_parts())
        out, _ = execute_pick_place(empty_scene, _move((0.25, 0.5), (0.25, 0.6), math.pi / 2), params)
        it = out.items[0]
        assert (it.x, it.y) == pytest.approx((0.25, 0.6))
        assert it.theta == pytest.approx(math.pi / 2)

    def test_bag_transport_carries_contents(self, empty_scene, params):
        ring = empty_scene.add_cable(ring_positions(np.array([0.25, 0.4])), closed=True)
        empty_scene.add_bag(ring, (0.2, 0.4, 0.95))
        empty_scene.add_item(Pose2(0.25, 0.4), cube_parts())
        empty_scene.stage = Stage.BAG_TRANSPORT
        grasp = ring.pos[0].copy()
        out, _ = execute_pick_place(empty_scene, _move(grasp, grasp + [0.0, 0.2]), params)
        assert (out.items[0].x, out.items[0].y) == pytest.approx((0.25, 0.6))
        assert out.items[0].id in out.bags[0].items

    def test_fold_reflects_grasped_corner(self, empty_scene, params):
        fab = empty_scene.add_fabric(grid_positions(np.array([0.25, 0.5]), 0.0))
        empty_scene.stage = Stage.FABRIC_FOLD
        out, _ = execute_pick_place(empty_scene, _move(fab.pos[0], (0.25, 0.5)), params)
        folded = out.fabrics[0]
        assert folded.layer[0] == 1
        assert folded.layer[-1] == 0
        np.testing.assert_allclose(folded.pos[0], [0.25, 0.5], atol=1e-3)

    def test_non_finite_action(self, empty_scene, params):
        with pytest.raises(ArgumentError):
            execute_pick_place(empty_scene, PickPlaceAction.from_array(np.array([np.nan, 0, 0, 0, 0, 0])), params)

    def test_deterministic(self, empty_scene, params):
        cab = _straight_cable(empty_scene)
        a = _move(cab.pos[3], (0.4, 0.2))
        first, _ = execute_pick_place(empty_scene, a, params)
        second, _ = execute_pick_place(empty_scene, a, params)
        assert dump_scene(first) == dump_scene(second)


class TestRelax:
    def test_satisfied_constraints_are_a_fixed_point(self, empty_scene):
        _straight_cable(empty_scene)
        empty_scene.add_fabric(grid_positions(np.array([0.25, 0.7]), 0.3))
        cab_before = empty_scene.cables[0].pos.copy()
        fab_before = empty_scene.fabrics[0].pos.copy()
        relax_constraints(empty_scene, 30)
        np.testing.assert_allclose(empty_scene.cables[0].pos, cab_before, atol=1e-12)
        np.testing.assert_allclose(empty_scene.fabrics[0].pos, fab_before, atol=1e-12)

    def test_pair_meets_in_the_middle(self, empty_scene):
        cab = empty_scene.add_cable(np.array([[0.2, 0.5], [0.2, 0.5 + 2 * LINK_LENGTH]]))
        relax_constraints(empty_scene, 30)
        np.testing.assert_allclose(cab.pos, [[0.2, 0.51], [0.2, 0.53]], atol=1e-9)
        assert cab.link_lengths()[0] == pytest.approx(LINK_LENGTH, abs=1e-6)

    def test_pinned_end_holds(self, empty_scene):
        cab = empty_scene.add_cable(np.array([[0.2, 0.5], [0.2, 0.5 + 2 * LINK_LENGTH]]))
        relax_constraints(empty_scene, 30, {cab.id: {0}})
        np.testing.assert_array_equal(cab.pos[0], [0.2, 0.5])
        assert cab.pos[1] == pytest.approx([0.2, 0.52], abs=1e-6)

    def test_compressed_links_are_pushed_apart(self, empty_scene):
        cab = empty_scene.add_cable(np.array([[0.2, 0.5], [0.2, 0.51]]))
        relax_constraints(empty_scene, 5)
        np.testing.assert_allclose(cab.pos, [[0.2, 0.495], [0.2, 0.515]], atol=1e-9)

    def test_coincident_beads_separate(self, empty_scene):
        cab = empty_scene.add_cable(np.array([[0.2, 0.5], [0.2, 0.5]]))
        relax_constraints(empty_scene, 5)
        assert cab.link_lengths()[0] == pytest.approx(LINK_LENGTH, abs=1e-9)

    def test_residual_counts_compression(self, empty_scene):
        empty_scene.add_cable(np.array([[0.2, 0.5], [0.2, 0.5 + 0.25 * LINK_LENGTH]]))
        assert max_link_residual(empty_scene) == pytest.approx(0.75)

    def test_positions_stay_inside_workspace(self, empty_scene):
        cab = empty_scene.add_cable(np.array([[0.0, 0.0], [0.0, 0.1]]))
        relax_constraints(empty_scene, 30)
        assert np.all(cab.pos >= 0.0)
        assert np.all(cab.pos < empty_scene.calib.upper())

    def test_zero_iterations(self, empty_scene):
        with pytest.raises(ArgumentError):
            relax_constraints(empty_scene, 0)


def test_follow_the_leader_restores_rest_length(empty_scene):
    cab = _straight_cable(empty_scene, 6)
    cab.pos[0] -= [0.0, 0.1]
    follow_the_leader(cab, 0)
    np.testing.assert_allclose(cab.link_lengths(), LINK_LENGTH, atol=1e-12)


def _link_ratios(scene: Scene) -> np.ndarray:
    parts = [cab.link_lengths() / cab.rest for cab in scene.cables if cab.n > 1]
    return np.concatenate(parts) if parts else np.ones(1)


def _random_action(scene: Scene, rng: np.random.Generator) -> PickPlaceAction:
    handles = [cab.pos for cab in scene.cables] + [fab.pos for fab in scene.fabrics]
    handles += [it.center[None] for it in scene.items]
    pts = handles[int(rng.integers(len(handles)))]
    pick = pts[int(rng.integers(len(pts)))]
    place = scene.calib.lower() + rng.uniform(0.0, 1.0, size=2) * (scene.calib.upper() - scene.calib.lower())
    return PickPlaceAction(Pose2(float(pick[0]), float(pick[1])), Pose2(float(place[0]), float(place[1]), rng.uniform(0, 2 * math.pi)))


class TestLinkResidual:
    @pytest.mark.parametrize("task_id", TASK_IDS)
    def test_reset_scenes(self, calib, task_id):
        for seed in range(5):
            scene, _ = reset_task(get_task(task_id), np.random.default_rng(seed), calib)
            r = _link_ratios(scene)
            assert r.min() >= 0.8 and r.max() <= 1.2, (seed, r.min(), r.max())

    def test_pinned_ring_drag_is_bounded(self, empty_scene, params):
        ring = empty_scene.add_cable(ring_positions(np.array([0.25, 0.5])), closed=True)
        empty_scene.add_bag(ring, (0.2, 0.4, 0.95))
        empty_scene.stage = Stage.BAG_OPEN
        grasp = ring.pos[0].copy()
        out, _ = execute_pick_place(empty_scene, _move(grasp, grasp + [0.0, 0.4]), params)
        r = _link_ratios(out)
        assert r.min() >= 0.8 and r.max() <= 1.2
        assert max_link_residual(out) <= 0.2
        assert np.linalg.norm(out.cables[0].pos[0] - grasp) < 0.4

    @pytest.mark.slow
    @pytest.mark.parametrize("task_id", TASK_IDS)
    def test_random_actions(self, calib, params, task_id):
        spec = get_task(task_id)
        rng = np.random.default_rng(99)
        scene, goal = reset_task(spec, rng, calib)
        for k in range(1000):
            if k % 25 == 0:
                scene, goal = reset_task(spec, rng, calib)
            scene, _ = execute_pick_place(scene, _random_action(scene, rng), params)
            scene.stage = update_stage(spec, scene, goal)
            r = _link_ratios(scene)
            assert r.min() >= 0.8 and r.max() <= 1.2, (k, r.min(), r.max())


class TestPerturb:
    def test_zero_magnitude(self, empty_scene, rng):
        _straight_cable(empty_scene)
        out = perturb_scene(empty_scene, rng, 0.0)
        np.testing.assert_array_equal(out.cables[0].pos, empty_scene.cables[0].pos)

    def test_same_seed_same_scene(self, empty_scene):
        empty_scene.add_cable(ring_positions(np.array([0.25, 0.5])), closed=True)
        a = perturb_scene(empty_scene, np.random.default_rng(7), 0.5)
        b = perturb_scene(empty_scene, np.random.default_rng(7), 0.5)
        assert dump_scene(a) == dump_scene(b)

    def test_negative_magnitude(self, empty_scene, rng):
        with pytest.raises(ArgumentError):
            perturb_scene(empty_scene, rng, -0.1)

    def test_rings_come_out_closed(self, calib):
        scene = Scene(calib)
        scene.add_cable(ring_positions(np.array([0.25, 0.5])), closed=True)
        below = 0
        for seed in range(100):
            out = perturb_scene(scene, np.random.default_rng(seed), 0.5)
            below += hull_area(out.cables[0].pos) < RING_AREA_THRESHOLD
        assert below >= 90


class TestSnapshot:
    @pytest.fixture
    def busy_scene(self, empty_scene):
        ring = empty_scene.add_cable(ring_positions(np.array([0.25, 0.3])), closed=True)
        empty_scene.add_bag(ring, (0.2, 0.4, 0.95))
        empty_scene.add_fabric(grid_positions(np.array([0.25, 0.75]), 0.2))
        it = empty_scene.add_item(Pose2(0.25, 0.3, 0.4), cube_parts())
        empty_scene.bags[0].items.add(it.id)
        empty_scene.stage = Stage.BAG_INSERT
        return empty_scene

    def test_bytes_round_trip(self, busy_scene):
        data = dump_scene(busy_scene)
        again = load_scene_bytes(data)
        assert dump_scene(again) == data
        assert again.stage == Stage.BAG_INSERT
        assert again.bags[0].items == busy_scene.bags[0].items

    def test_file_round_trip(self, busy_scene, tmp_path):
        save_scene(tmp_path / "scene.txt", busy_scene)
        again = load_scene(tmp_path / "scene.txt")
        np.testing.assert_allclose(again.fabrics[0].pos, busy_scene.fabrics[0].pos, atol=1e-6)
