# tests/test_nn.py
from __future__ import annotations

import math

import numpy as np
import pytest

from pickplace.errors import ArgumentError, ConfigError, LogicError
from pickplace.harness.oracles import naive_conv2d
from pickplace.nn import (
    AdamState,
    ParamSet,
    Tensor,
    adam_update,
    conv2d_backward,
    conv2d_forward,
    fcn_backward,
    fcn_forward,
    fcn_init,
    finite_diff_grad_check,
    hourglass_spec,
    load_checkpoint,
    param_count,
    pixel_cross_entropy,
    save_checkpoint,
    set_finite_checks,
)
from pickplace.nn.checkpoint import decode_checkpoint, encode_checkpoint
from pickplace.nn.layers import upsample2x_backward, upsample2x_forward, upsample_matrix


class TestConv:
    def test_one_by_one_identity(self, rng):
        x = rng.normal(size=(5, 7, 3))
        k = np.eye(3).reshape(1, 1, 3, 3)
        np.testing.assert_allclose(conv2d_forward(x, k), x)

    def test_box_filter_on_constant(self):
        x = np.full((6, 6, 1), 2.5)
        k = np.full((3, 3, 1, 1), 1.0 / 9.0)
        out = conv2d_forward(x, k, pad=1)
        np.testing.assert_allclose(out[1:-1, 1:-1], 2.5)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_nested_loops(self, rng, stride):
        x = rng.normal(size=(8, 8, 2))
        k = rng.normal(size=(3, 3, 2, 4))
        b = rng.normal(size=4)
        np.testing.assert_allclose(
            conv2d_forward(x, k, stride, 1, b), naive_conv2d(x, k, stride, 1, b), rtol=1e-5, atol=1e-9
        )

    def test_channel_mismatch(self, rng):
        with pytest.raises(ArgumentError):
            conv2d_forward(rng.normal(size=(4, 4, 2)), rng.normal(size=(3, 3, 3, 1)))

    def test_conv_cross_entropy_gradient(self, rng):
        x = Tensor(rng.normal(size=(6, 6, 2)), "x")
        k = Tensor(rng.normal(scale=0.3, size=(3, 3, 2, 1)), "k")
        params = ParamSet([x, k])
        label = 17

        def loss() -> float:
            return pixel_cross_entropy(conv2d_forward(x.data, k.data, 1, 1), label)[0]

        _, g = pixel_cross_entropy(conv2d_forward(x.data, k.data, 1, 1), label)
        dx, dk, _ = conv2d_backward(g, x.data, k.data, 1, 1)
        x.accumulate(dx)
        k.accumulate(dk)
        assert finite_diff_grad_check(loss, params, h=1e-5, n_coords=60, rng=rng, floor=1e-6) < 1e-3

    def test_finite_checks(self):
        set_finite_checks(True)
        try:
            with pytest.raises(LogicError):
                conv2d_forward(np.full((3, 3, 1), np.nan), np.ones((1, 1, 1, 1)))
        finally:
            set_finite_checks(False)


class TestUpsample:
    def test_half_pixel_weights(self):
        np.testing.assert_allclose(
            upsample_matrix(2, "clamp"), [[1.0, 0.0], [0.75, 0.25], [0.25, 0.75], [0.0, 1.0]]
        )
        np.testing.assert_allclose(upsample_matrix(2, "wrap")[0], [0.75, 0.25])

    def test_constant_stays_constant(self):
        out = upsample2x_forward(np.full((3, 5, 2), 1.5))
        assert out.shape == (6, 10, 2)
        np.testing.assert_allclose(out, 1.5)

    @pytest.mark.parametrize("mode", ["zeros", "periodic"])
    def test_backward_is_adjoint(self, rng, mode):
        x = rng.standard_normal((2, 3, 4, 2))
        g = rng.standard_normal((2, 6, 8, 2))
        lhs = float(np.sum(upsample2x_forward(x, mode) * g))
        rhs = float(np.sum(x * upsample2x_backward(g, x, mode)))
        assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-10)


class TestFcn:
    def test_zero_params_give_zero_map(self, rng):
        spec = hourglass_spec(4, 2, width=4)
        params = fcn_init(spec, rng)
        for t in params:
            t.data = np.zeros_like(t.data)
        out, _ = fcn_forward(spec, params, rng.normal(size=(8, 8, 4)).astype(np.float32))
        assert np.all(out == 0.0)

    def test_output_shape(self, rng):
        spec = hourglass_spec(6, 3)
        params = fcn_init(spec, rng)
        out, _ = fcn_forward(spec, params, np.zeros((64, 32, 6), dtype=np.float32))
        assert out.shape == (64, 32, 3)
        assert params.count() == param_count(spec)

    def test_odd_input(self, rng):
        spec = hourglass_spec(1, 1, width=4)
        with pytest.raises(ArgumentError):
            fcn_forward(spec, fcn_init(spec, rng), np.zeros((15, 16, 1)))

    def test_translation_equivariance(self, rng):
        spec = hourglass_spec(3, 2, width=4)
        params = fcn_init(spec, rng, dtype=np.float64)
        x = rng.normal(size=(16, 16, 3))
        shift = (4, 6)
        out, _ = fcn_forward(spec, params, x, mode="periodic")
        moved, _ = fcn_forward(spec, params, np.roll(x, shift, axis=(0, 1)), mode="periodic")
        np.testing.assert_allclose(moved, np.roll(out, shift, axis=(0, 1)), atol=1e-5)

    def test_full_network_gradient(self, rng):
        spec = hourglass_spec(2, 1, width=4)
        params = fcn_init(spec, rng, dtype=np.float64)
        x = rng.normal(size=(16, 16, 2))
        label = 100

        def loss() -> float:
            return pixel_cross_entropy(fcn_forward(spec, params, x)[0], label)[0]

        out, cache = fcn_forward(spec, params, x)
        _, g = pixel_cross_entropy(out, label)
        params.zero_grad()
        fcn_backward(spec, params, cache, g)
        assert finite_diff_grad_check(loss, params, h=1e-5, n_coords=80, rng=rng, floor=1e-6) < 1e-2


class TestLosses:
    def test_confident_logits(self):
        loss, _ = pixel_cross_entropy(np.array([50.0, -50.0]), 0)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_uniform_logits(self):
        loss, grad = pixel_cross_entropy(np.zeros((10, 10)), 42)
        assert loss == pytest.approx(math.log(100))
        assert grad.shape == (10, 10)
        assert grad.sum() == pytest.approx(0.0, abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ArgumentError):
            pixel_cross_entropy(np.zeros(4), 4)

    def test_gradient(self, rng):
        z = Tensor(rng.normal(size=(5, 6)), "z")
        z.accumulate(pixel_cross_entropy(z.data, 11)[1])
        err = finite_diff_grad_check(lambda: pixel_cross_entropy(z.data, 11)[0], ParamSet([z]), h=1e-5)
        assert err < 1e-3


class TestAdam:
    def test_zero_gradient_is_a_no_op(self):
        w = Tensor(np.array([1.0, -2.0, 3.0]), "w")
        adam_update(AdamState(lr=0.1), ParamSet([w]))
        np.testing.assert_array_equal(w.data, [1.0, -2.0, 3.0])

    def test_first_step_moves_by_lr(self):
        w = Tensor(np.zeros(3), "w")
        w.accumulate(np.array([0.5, -2.0, 1e-3]))
        adam_update(AdamState(lr=0.01), ParamSet([w]))
        np.testing.assert_allclose(w.data, [-0.01, 0.01, -0.01], rtol=1e-4)
        assert np.all(w.grad == 0.0)

    def test_runs_are_identical(self):
        def run() -> np.ndarray:
            w = Tensor(np.array([1.0, 2.0]), "w")
            params, state = ParamSet([w]), AdamState(lr=0.05)
            for _ in range(20):
                w.accumulate(2.0 * w.data)
                adam_update(state, params)
            return w.data

        assert run().tobytes() == run().tobytes()

    def test_shape_mismatch(self):
        w = Tensor(np.zeros(3), "w")
        w.grad = np.zeros(4)
        with pytest.raises(ArgumentError):
            adam_update(AdamState(), ParamSet([w]))


def test_gradcheck_on_quadratic(rng):
    w = Tensor(rng.normal(size=10), "w")
    w.accumulate(2.0 * w.data)
    assert finite_diff_grad_check(lambda: float((w.data**2).sum()), ParamSet([w]), h=1e-4) < 1e-6


def test_tensor_rank_limit():
    with pytest.raises(ArgumentError):
        Tensor(np.zeros((1, 1, 1, 1, 1)), "big")


def test_duplicate_parameter():
    with pytest.raises(ArgumentError):
        ParamSet([Tensor(np.zeros(1), "a"), Tensor(np.zeros(1), "a")])


class TestCheckpoint:
    SPEC = {"kind": "transporter", "crop": 8}

    def test_round_trip(self, tmp_path, rng):
        arrays = {"a": rng.normal(size=(3, 3, 2, 4)).astype(np.float32), "b": np.arange(4, dtype=np.float32)}
        path = save_checkpoint(tmp_path / "m.ckpt", self.SPEC, arrays, 250)
        spec, tensors, step = load_checkpoint(path, self.SPEC)
        assert spec == self.SPEC and step == 250
        assert list(tensors) == ["a", "b"]
        np.testing.assert_array_equal(tensors["a"], arrays["a"])

    def test_different_spec(self):
        data = encode_checkpoint(self.SPEC, {"a": np.zeros(2)}, 1)
        with pytest.raises(ConfigError):
            decode_checkpoint(data, {"kind": "transporter", "crop": 16})

    def test_tampered_spec(self):
        data = bytearray(encode_checkpoint(self.SPEC, {"a": np.zeros(2)}, 1))
        i = data.index(b"transporter")
        data[i] = ord("T")
        with pytest.raises(ConfigError):
            decode_checkpoint(bytes(data))

    def test_truncated(self):
        data = encode_checkpoint(self.SPEC, {"a": np.zeros(8)}, 1)
        with pytest.raises(ConfigError):
            decode_checkpoint(data[:-5])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / "nope.ckpt")
