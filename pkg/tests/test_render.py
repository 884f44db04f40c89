# tests/test_render.py
from __future__ import annotations

import math

import numpy as np

from pickplace.render import (
    TABLE_COLOR,
    item_mask,
    read_pnm,
    render_both,
    render_observation,
    render_segmentation,
    write_heatmap,
    write_pgm16,
    write_ppm,
)
from pickplace.sim.scene import BEAD_RADIUS, CUBE_HEIGHT, box_part, cube_parts, grid_positions
from pickplace.spatial import Pose2, pixel_to_world


def test_empty_scene_is_table(empty_scene):
    obs = render_observation(empty_scene)
    assert obs.shape == (80, 160, 6)
    np.testing.assert_allclose(obs[..., :3], np.broadcast_to(TABLE_COLOR, (80, 160, 3)), atol=1e-7)
    assert np.all(obs[..., 3:] == 0.0)
    assert not render_segmentation(empty_scene).any()


def test_depth_channels_identical(empty_scene):
    empty_scene.add_item(Pose2(0.25, 0.5, 0.3), cube_parts())
    obs = render_observation(empty_scene)
    assert np.array_equal(obs[..., 3], obs[..., 4])
    assert np.array_equal(obs[..., 3], obs[..., 5])


def test_single_bead_disk(empty_scene, calib):
    center = pixel_to_world((40, 80), calib)
    cab = empty_scene.add_cable(center[None])
    obs, seg = render_both(empty_scene)
    disk = seg == cab.id
    assert disk[40, 80]
    np.testing.assert_allclose(obs[disk, 3], 2 * BEAD_RADIUS)
    np.testing.assert_allclose(obs[disk, :3], np.broadcast_to(cab.color, (int(disk.sum()), 3)), atol=1e-7)
    expected = math.pi * (BEAD_RADIUS / calib.pixel_size_m) ** 2
    assert abs(int(disk.sum()) - expected) <= 2 * math.pi * BEAD_RADIUS / calib.pixel_size_m


def test_two_items_pixel_counts(empty_scene, calib):
    a = empty_scene.add_item(Pose2(0.1, 0.2, 0.0), [box_part(0.05, 0.05)])
    b = empty_scene.add_item(Pose2(0.3, 0.7, 0.0), [box_part(0.1, 0.05)])
    seg = render_segmentation(empty_scene)
    ps2 = calib.pixel_size_m**2
    for it, area in ((a, 0.05 * 0.05), (b, 0.1 * 0.05)):
        count = int((seg == it.id).sum())
        per_side = 0.05 / calib.pixel_size_m
        assert abs(count - area / ps2) <= 4 * per_side + 4
        assert count == int(item_mask(it, calib).sum())


def test_fabric_folded_over_cube_hides_it(empty_scene, calib):
    fab = empty_scene.add_fabric(grid_positions(np.array([0.25, 0.5]), 0.0))
    cube = empty_scene.add_item(Pose2(0.25, 0.5, 0.0), cube_parts(), layer=1)
    assert (render_segmentation(empty_scene) == cube.id).any()
    fab.layer[:] = 2
    seg = render_segmentation(empty_scene)
    assert not (seg == cube.id).any()


def test_item_on_fabric_is_taller(empty_scene):
    empty_scene.add_fabric(grid_positions(np.array([0.25, 0.5]), 0.0))
    empty_scene.add_item(Pose2(0.25, 0.5, 0.0), cube_parts(), layer=1)
    obs = render_observation(empty_scene)
    assert obs[40, 80, 3] > CUBE_HEIGHT


def test_observation_color_matches_segmentation(empty_scene):
    it = empty_scene.add_item(Pose2(0.2, 0.3, 0.4), cube_parts(), color=(0.1, 0.9, 0.2))
    obs, seg = render_both(empty_scene)
    np.testing.assert_allclose(obs[seg == it.id, :3], np.broadcast_to(it.color, ((seg == it.id).sum(), 3)), atol=1e-7)


def test_translation_equivariance(empty_scene, calib):
    empty_scene.add_item(Pose2(0.2, 0.3, 0.0), cube_parts())
    empty_scene.add_cable(pixel_to_world((30, 50), calib)[None])
    shifted = empty_scene.copy()
    k = 3
    for it in shifted.items:
        it.x += k * calib.pixel_size_m
    for cab in shifted.cables:
        cab.pos = cab.pos + np.array([k * calib.pixel_size_m, 0.0])
    a, b = render_observation(empty_scene), render_observation(shifted)
    np.testing.assert_array_equal(b[k:], a[:-k])


def test_image_export_round_trip(tmp_path, rng):
    rgb = rng.uniform(size=(6, 9, 3))
    write_ppm(tmp_path / "c.ppm", rgb)
    back = read_pnm(tmp_path / "c.ppm")
    assert back.shape == (6, 9, 3)
    np.testing.assert_array_equal(back, np.rint(rgb * 255).astype(np.uint8))

    depth = np.full((4, 5), 0.032)
    write_pgm16(tmp_path / "d.pgm", depth)
    assert np.all(read_pnm(tmp_path / "d.pgm") == 32)

    write_heatmap(tmp_path / "h.pgm", np.arange(12.0).reshape(3, 4))
    h = read_pnm(tmp_path / "h.pgm")
    assert h.min() == 0 and h.max() == 255
