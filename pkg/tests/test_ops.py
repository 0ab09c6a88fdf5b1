"""Tensor-op contracts: forward values, invariants, and exact hand gradients.

Every backward function is checked against central finite differences at
h=1e-4; the documented tolerance for single ops is 1e-5 max relative
error. conv2d is additionally checked against a naive direct-summation
oracle that shares no code with the im2col implementation.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfs_curate import ops
from cfs_curate.errors import DimensionError, RangeError

RNG_SEED = 42


def naive_conv2d(x, kernel, bias, stride, pad):
    """Direct four-loop convolution used as an independent oracle."""
    b, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((b, o, oh, ow))
    for bi in range(b):
        for oi in range(o):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[bi, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[bi, oi, i, j] = np.sum(patch * kernel[oi]) + bias[oi]
    return out


class TestMatmul:
    def test_known_product(self):
        out = ops.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
        np.testing.assert_array_equal(out, [[3.0], [7.0]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            ops.matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_non_2d_rejected(self):
        with pytest.raises(DimensionError):
            ops.matmul(np.zeros(3), np.zeros((3, 2)))

    def test_gradients_match_fd(self):
        rng = np.random.default_rng(RNG_SEED)
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(5, 3))
        w = rng.normal(size=(4, 3))
        da, db = ops.matmul_backward(w, a, b)
        fa = ops.fd_gradient(lambda m: float(np.sum(ops.matmul(m, b) * w)), a)
        fb = ops.fd_gradient(lambda m: float(np.sum(ops.matmul(a, m) * w)), b)
        assert ops.max_relative_error(da, fa) < 1e-5
        assert ops.max_relative_error(db, fb) < 1e-5


class TestConv2d:
    def test_ones_example(self):
        """4x4 ones through a 2x2 ones kernel at stride 2 gives all 4s."""
        out = ops.conv2d(np.ones((1, 1, 4, 4)), np.ones((1, 1, 2, 2)), np.zeros(1), stride=2)
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 4.0))

    @pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1), (3, 2), (2, 0)])
    def test_matches_naive_oracle(self, stride, pad):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(2, 3, 9, 7))
        k = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        got = ops.conv2d(x, k, b, stride=stride, pad=pad)
        np.testing.assert_allclose(got, naive_conv2d(x, k, b, stride, pad), atol=1e-12)

    def test_kernel_larger_than_input_rejected(self):
        with pytest.raises(DimensionError):
            ops.conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 5, 5)), np.zeros(1))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            ops.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 2, 2)), np.zeros(1))

    def test_gradients_match_fd(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(2, 2, 6, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        bias = rng.normal(size=3)
        w = rng.normal(size=ops.conv2d(x, k, bias, stride=2, pad=1).shape)

        def loss_x(m):
            return float(np.sum(ops.conv2d(m, k, bias, stride=2, pad=1) * w))

        def loss_k(m):
            return float(np.sum(ops.conv2d(x, m, bias, stride=2, pad=1) * w))

        def loss_b(m):
            return float(np.sum(ops.conv2d(x, k, m, stride=2, pad=1) * w))

        dx, dk, db = ops.conv2d_backward(w, x, k, stride=2, pad=1)
        assert ops.max_relative_error(dx, ops.fd_gradient(loss_x, x)) < 1e-5
        assert ops.max_relative_error(dk, ops.fd_gradient(loss_k, k)) < 1e-5
        assert ops.max_relative_error(db, ops.fd_gradient(loss_b, bias)) < 1e-5


class TestNormalize:
    def test_instance_mode_statistics(self):
        """Instance mode with identity affine leaves per-sample per-channel
        mean 0 and variance 1, up to eps, for eps <= 1e-8."""
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(3, 4, 5, 6))
        out = ops.normalize(x, "instance", np.ones(4), np.zeros(4), eps=1e-10)
        assert np.abs(out.mean(axis=(2, 3))).max() <= 1e-10
        assert np.abs(out.var(axis=(2, 3)) - 1).max() <= 1e-6

    def test_batch_mode_statistics(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(3, 4, 5, 6))
        out = ops.normalize(x, "batch", np.ones(4), np.zeros(4), eps=1e-10)
        assert np.abs(out.mean(axis=(0, 2, 3))).max() <= 1e-10
        assert np.abs(out.var(axis=(0, 2, 3)) - 1).max() <= 1e-6

    def test_batch_equals_instance_for_single_sample(self):
        """With B=1, batch statistics reduce to per-sample statistics."""
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(1, 2, 3, 3))
        g, b = rng.normal(size=2), rng.normal(size=2)
        np.testing.assert_allclose(
            ops.normalize(x, "batch", g, b),
            ops.normalize(x, "instance", g, b),
            atol=1e-14,
        )

    def test_layer_mode_normalizes_last_axis(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(2, 7, 9))
        out = ops.normalize(x, "layer", np.ones(9), np.zeros(9), eps=1e-12)
        np.testing.assert_allclose(out.mean(axis=-1), 0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1, atol=1e-6)

    def test_unknown_mode_rejected(self):
        with pytest.raises(RangeError):
            ops.normalize(np.zeros((1, 1, 2, 2)), "group", np.ones(1), np.zeros(1))

    def test_affine_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            ops.normalize(np.zeros((1, 3, 2, 2)), "batch", np.ones(2), np.zeros(2))

    @pytest.mark.parametrize("mode,shape", [
        ("batch", (2, 3, 4, 4)),
        ("instance", (2, 3, 4, 4)),
        ("layer", (2, 5, 6)),
    ])
    def test_gradients_match_fd(self, mode, shape):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=shape)
        n = shape[1] if mode != "layer" else shape[-1]
        gamma = rng.uniform(0.5, 1.5, size=n)
        beta = rng.normal(size=n)
        w = rng.normal(size=shape)

        out, cache = ops.normalize_cached(x, mode, gamma, beta)
        dx, dg, db = ops.normalize_backward(w, cache)
        fx = ops.fd_gradient(lambda m: float(np.sum(ops.normalize(m, mode, gamma, beta) * w)), x)
        fg = ops.fd_gradient(lambda m: float(np.sum(ops.normalize(x, mode, m, beta) * w)), gamma)
        fb = ops.fd_gradient(lambda m: float(np.sum(ops.normalize(x, mode, gamma, m) * w)), beta)
        assert ops.max_relative_error(dx, fx) < 1e-5
        assert ops.max_relative_error(dg, fg) < 1e-5
        assert ops.max_relative_error(db, fb) < 1e-5


class TestActivations:
    def test_relu_values(self):
        np.testing.assert_array_equal(
            ops.activation(np.array([-2.0, 0.0, 3.0]), "relu"), [0.0, 0.0, 3.0]
        )

    def test_gelu_zero_and_symmetry(self):
        assert ops.activation(np.array([0.0]), "gelu")[0] == 0.0
        x = np.linspace(-3, 3, 25)
        y = ops.activation(x, "gelu")
        # gelu(x) - gelu(-x) == x for the tanh form
        np.testing.assert_allclose(y - y[::-1], x, atol=1e-12)

    def test_unknown_kind_rejected(self):
        with pytest.raises(RangeError):
            ops.activation(np.zeros(3), "swish")

    def test_gelu_gradient_matches_fd(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(4, 7))
        w = rng.normal(size=(4, 7))
        dx = ops.activation_backward(w, x, "gelu")
        fd = ops.fd_gradient(lambda m: float(np.sum(ops.activation(m, "gelu") * w)), x)
        assert ops.max_relative_error(dx, fd) < 1e-5

    def test_relu_gradient_away_from_kink(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(4, 7))
        x[np.abs(x) < 0.05] = 0.5  # keep fd away from the kink
        w = rng.normal(size=(4, 7))
        dx = ops.activation_backward(w, x, "relu")
        fd = ops.fd_gradient(lambda m: float(np.sum(ops.activation(m, "relu") * w)), x)
        assert ops.max_relative_error(dx, fd) < 1e-5


class TestSoftmax:
    def test_known_values(self):
        """softmax(0, ln 3) = (0.25, 0.75)."""
        out = ops.softmax(np.array([0.0, np.log(3.0)]), axis=-1)
        np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(5, 9)) * 10
        out = ops.softmax(x, axis=-1)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
        assert (out > 0).all()

    def test_shift_invariance_handles_large_logits(self):
        x = np.array([1000.0, 1001.0])
        out = ops.softmax(x, axis=0)
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(3, 6))
        w = rng.normal(size=(3, 6))
        y = ops.softmax(x, axis=-1)
        dx = ops.softmax_backward(w, y, axis=-1)
        fd = ops.fd_gradient(lambda m: float(np.sum(ops.softmax(m, axis=-1) * w)), x)
        assert ops.max_relative_error(dx, fd) < 1e-5


class TestFdHelpers:
    def test_fd_gradient_on_quadratic(self):
        """fd of sum(x^2) is 2x to second order."""
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(3, 4))
        fd = ops.fd_gradient(lambda m: float(np.sum(m * m)), x)
        np.testing.assert_allclose(fd, 2 * x, atol=1e-7)

    def test_fd_gradient_leaves_input_unchanged(self):
        x = np.ones((2, 2))
        before = x.copy()
        ops.fd_gradient(lambda m: float(m.sum()), x)
        np.testing.assert_array_equal(x, before)

    def test_max_relative_error_floor(self):
        # identical tiny values: floored denominator keeps the ratio finite
        assert ops.max_relative_error(np.array([1e-9]), np.array([2e-9])) < 1e-2
        assert ops.max_relative_error(np.array([1.0]), np.array([1.0])) == 0.0

    @given(st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=50, deadline=None)
    def test_max_relative_error_symmetric(self, a, b):
        x, y = np.array([a]), np.array([b])
        assert ops.max_relative_error(x, y) == ops.max_relative_error(y, x)
