# tests/test_spatial.py
from __future__ import annotations

import math

import numpy as np
import pytest

from pickplace.errors import ArgumentError, BoundsError
from pickplace.spatial import (
    ImageSE2,
    Pose2,
    WorkspaceCalib,
    pixel_to_world,
    rotation_bin,
    rotation_stack,
    transform_image_se2,
    world_to_pixel,
    wrap_angle,
)


def test_adjacent_pixels_are_3125_microns_apart_at_full_resolution():
    c = WorkspaceCalib(img_h=160, img_w=320)
    d = pixel_to_world((0, 1), c) - pixel_to_world((0, 0), c)
    np.testing.assert_allclose(d, [0.0, 0.003125], atol=1e-12)


def test_pixel_zero_maps_to_half_pixel_center(calib):
    np.testing.assert_allclose(pixel_to_world((0, 0), calib), [calib.pixel_size_m / 2] * 2)


def test_pixel_world_round_trip(calib, rng):
    us = rng.integers(0, calib.img_h, size=1000)
    vs = rng.integers(0, calib.img_w, size=1000)
    for u, v in zip(us, vs):
        assert world_to_pixel(pixel_to_world((u, v), calib), calib) == (u, v)


def test_out_of_bounds_pixel_raises(calib):
    with pytest.raises(BoundsError):
        pixel_to_world((calib.img_h, 0), calib)
    with pytest.raises(BoundsError):
        world_to_pixel((-0.01, 0.2), calib)


def test_world_to_pixel_clip(calib):
    assert world_to_pixel((-1.0, 5.0), calib, clip=True) == (0, calib.img_w - 1)


def test_non_square_pixels_rejected():
    with pytest.raises(ValueError):
        WorkspaceCalib(img_h=80, img_w=100)


def test_pose_theta_is_wrapped():
    assert Pose2(0.0, 0.0, -math.pi / 2).theta == pytest.approx(3 * math.pi / 2)
    assert Pose2(0.0, 0.0, 2 * math.pi).theta == 0.0
    assert 0.0 <= wrap_angle(-1e-18) < 2 * math.pi


def test_pose_rejects_nan():
    with pytest.raises(ArgumentError):
        Pose2(float("nan"), 0.0)


def test_image_se2_inverse_within_half_pixel(rng):
    for _ in range(50):
        t = ImageSE2(*rng.uniform(-5, 5, size=2), rng.uniform(0, 2 * math.pi), tuple(rng.uniform(0, 20, size=2)))
        p = rng.uniform(0, 30, size=2)
        back = t.inverse().apply(t.apply(p))
        assert np.all(np.abs(back - p) <= 0.5)


def test_non_finite_transform_rejected():
    with pytest.raises(ArgumentError):
        ImageSE2(float("inf"), 0.0)


class TestTransformImage:
    def _img(self, rng):
        return rng.uniform(size=(20, 30, 6)).astype(np.float32)

    def test_identity_is_exact(self, rng):
        img = self._img(rng)
        out = transform_image_se2(img, ImageSE2())
        np.testing.assert_array_equal(out, img)

    def test_pure_translation(self, rng):
        img = self._img(rng)
        out = transform_image_se2(img, ImageSE2(3.0, 5.0))
        np.testing.assert_array_equal(out[3:, 5:], img[:-3, :-5])

    def test_half_turn_twice_is_identity(self, rng):
        img = self._img(rng)
        t = ImageSE2(0.0, 0.0, math.pi, (9.5, 14.5))
        out = transform_image_se2(transform_image_se2(img, t), t)
        np.testing.assert_array_equal(out, img)

    def test_fill_outside_frame(self, rng):
        img = self._img(rng)
        out = transform_image_se2(img, ImageSE2(4.0, 0.0), fill=(0.1, 0.2, 0.3, 0.0, 0.0, 0.0))
        np.testing.assert_allclose(out[:4, :, :3], np.broadcast_to([0.1, 0.2, 0.3], (4, 30, 3)), atol=1e-7)
        assert np.all(out[:4, :, 3:] == 0.0)

    def test_pivot_out_of_bounds(self, rng):
        with pytest.raises(BoundsError):
            transform_image_se2(self._img(rng), ImageSE2(0.0, 0.0, 0.1, (40.0, 0.0)))

    def test_bilinear_translation_matches_nearest_on_integer_shift(self, rng):
        img = self._img(rng)
        a = transform_image_se2(img, ImageSE2(2.0, -1.0), "bilinear")
        b = transform_image_se2(img, ImageSE2(2.0, -1.0), "nearest")
        np.testing.assert_allclose(a[2:, :-1], b[2:, :-1], atol=1e-6)


def test_rotation_stack():
    assert [t.alpha for t in rotation_stack(1, (3, 3))] == [0.0]
    np.testing.assert_allclose([t.alpha for t in rotation_stack(4, (0, 0))], [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    alphas = [t.alpha for t in rotation_stack(36, (1, 1))]
    np.testing.assert_allclose(np.diff(alphas), math.radians(10.0))
    assert rotation_stack(4, (2, 5))[0].is_identity
    with pytest.raises(ArgumentError):
        rotation_stack(0, (0, 0))


def test_rotation_bin():
    assert rotation_bin(math.pi, 36) == 18
    assert rotation_bin(0.0, 1) == 0
    assert rotation_bin(2 * math.pi - 1e-9, 24) == 0
