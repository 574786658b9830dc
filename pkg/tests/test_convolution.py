"""Convolution and pooling against a loop-based reference."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conv_reference
from stcorr import tensor as tt
from stcorr.convolution import ConvSpec, conv_nd, pool_frames_max, pool_spatial
from stcorr.gradcheck import grad_check_fd
from stcorr.tensor import GradTape, parameter


def t(values):
    return parameter(np.asarray(values, dtype=np.float64), dtype=np.float64)


class TestFrozenExamples:
    def test_length_preserving_box_filter(self):
        # frames (1,2,3,4), kernel (1,1,1), same padding: (0+1+2, 1+2+3, 2+3+4, 3+4+0)
        x = t(np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1))
        k = t(np.ones((1, 1, 3)))
        out = conv_nd(x, k, ConvSpec(kernel=(3,)))
        assert np.array_equal(out.data.ravel(), [3.0, 6.0, 9.0, 7.0])

    def test_dilated_taps_skip_frames(self):
        # frames 1..5, kernel (1,0,1) dilation 2 reaches two frames either side:
        # pad 2 -> out_t = x[t-2] + x[t+2] with zeros outside
        x = t(np.arange(1.0, 6.0).reshape(5, 1))
        k = t(np.array([1.0, 0.0, 1.0]).reshape(1, 1, 3))
        out = conv_nd(x, k, ConvSpec(kernel=(3,), dilation=(2,)))
        assert np.array_equal(out.data.ravel(), [3.0, 4.0, 6.0, 2.0, 3.0])

    def test_stride_two_halves_length(self):
        x = t(np.arange(8.0).reshape(8, 1))
        k = t(np.ones((1, 1, 1)))
        out = conv_nd(x, k, ConvSpec(kernel=(1,), stride=(2,)))
        assert np.array_equal(out.data.ravel(), [0.0, 2.0, 4.0, 6.0])


class TestSpecValidation:
    def test_even_kernel_rejected_for_same_padding(self):
        with pytest.raises(ValueError):
            ConvSpec(kernel=(2,)).pad_per_axis()

    def test_bad_group_divisibility(self):
        x = t(np.zeros((2, 3, 4, 4)))
        k = t(np.zeros((4, 1, 1, 1, 1)))
        with pytest.raises(ValueError):
            conv_nd(x, k, ConvSpec(kernel=(1, 1, 1), groups=2))

    def test_zero_dilation_rejected(self):
        with pytest.raises(ValueError):
            ConvSpec(kernel=(3,), dilation=(0,))

    def test_kernel_shape_mismatch(self):
        x = t(np.zeros((4, 2)))
        k = t(np.zeros((3, 2, 5)))
        with pytest.raises(ValueError):
            conv_nd(x, k, ConvSpec(kernel=(3,)))


conv_cases = st.sampled_from([
    # (T, C_in, C_out, H, W, kernel, stride, dilation, groups)
    (3, 2, 3, 5, 5, (1, 3, 3), (1, 1, 1), (1, 1, 1), 1),
    (4, 3, 3, 4, 4, (3, 3, 3), (1, 1, 1), (1, 2, 2), 3),
    (5, 2, 4, 6, 6, (1, 3, 3), (1, 2, 2), (1, 1, 1), 1),
    (6, 4, 4, 3, 3, (3, 3, 3), (1, 1, 1), (3, 2, 2), 4),
    (4, 4, 6, 5, 5, (1, 1, 1), (1, 1, 1), (1, 1, 1), 2),
    (7, 2, 2, 4, 4, (5, 3, 3), (2, 2, 2), (1, 1, 1), 1),
])


class TestAgainstReference:
    @given(conv_cases, st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_rank4_matches_loop_reference(self, case, seed):
        t_len, cin, cout, h, w, kernel, stride, dilation, groups = case
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(t_len, cin, h, w))
        k = rng.normal(size=(cout, cin // groups) + kernel)
        b = rng.normal(size=(cout,))
        got = conv_nd(t(x), t(k), ConvSpec(kernel, dilation, stride, groups), bias=t(b))
        want = conv_reference(x, k, stride, dilation, groups, bias=b)
        np.testing.assert_allclose(got.data, want, rtol=1e-10, atol=1e-12)

    @given(st.integers(min_value=0, max_value=2 ** 31 - 1),
           st.sampled_from([(3,), (5,)]), st.sampled_from([1, 2, 3]), st.sampled_from([1, 2]))
    @settings(max_examples=30, deadline=None)
    def test_rank2_matches_loop_reference(self, seed, kernel, dilation, stride):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(9, 3))
        k = rng.normal(size=(4, 3) + kernel)
        got = conv_nd(t(x), t(k), ConvSpec(kernel, (dilation,), (stride,)))
        want = conv_reference(x, k, (stride,), (dilation,), 1)
        np.testing.assert_allclose(got.data, want, rtol=1e-10, atol=1e-12)

    def test_depthwise_path_matches_general(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 4, 5, 5))
        k = rng.normal(size=(4, 1, 3, 3, 3))
        spec = ConvSpec((3, 3, 3), (2, 1, 1), (1, 1, 1), groups=4)
        got = conv_nd(t(x), t(k), spec)
        want = conv_reference(x, k, (1, 1, 1), (2, 1, 1), 4)
        np.testing.assert_allclose(got.data, want, rtol=1e-10, atol=1e-12)


class TestConvGradients:
    def test_dense_conv_gradients(self):
        rng = np.random.default_rng(11)
        params = {
            "k": t(rng.normal(size=(2, 2, 1, 3, 3)) * 0.5),
            "b": t(rng.normal(size=(2,))),
        }
        x = parameter(rng.normal(size=(2, 2, 4, 4)), dtype=np.float64)

        def loss(p):
            out = conv_nd(x, p["k"], ConvSpec((1, 3, 3), stride=(1, 2, 2)), bias=p["b"])
            return tt.tensor_sum(out * out)

        assert grad_check_fd(loss, params) < 1e-6

    def test_depthwise_conv_gradients_including_input(self):
        rng = np.random.default_rng(12)
        params = {
            "x": t(rng.normal(size=(4, 3, 3, 3))),
            "k": t(rng.normal(size=(3, 1, 3, 3, 3)) * 0.5),
        }

        def loss(p):
            out = conv_nd(p["x"], p["k"], ConvSpec((3, 3, 3), dilation=(2, 1, 1), groups=3))
            return tt.tensor_sum(out * out)

        assert grad_check_fd(loss, params) < 1e-6

    def test_rank2_conv_gradients(self):
        rng = np.random.default_rng(13)
        params = {
            "x": t(rng.normal(size=(6, 2))),
            "k": t(rng.normal(size=(3, 2, 5))),
        }

        def loss(p):
            out = conv_nd(p["x"], p["k"], ConvSpec((5,)))
            return tt.tensor_sum(out * out)

        assert grad_check_fd(loss, params) < 1e-6


class TestPooling:
    def test_avg_pool_values(self):
        x = t(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        out = pool_spatial(x, "avg")
        assert out.shape == (1, 1, 1, 1) and out.item() == 2.5

    def test_max_pool_first_argmax_on_ties(self):
        x = t(np.array([[[[5.0, 5.0], [5.0, 1.0]]]]))
        tape = GradTape({"x": x})
        loss = tt.tensor_sum(pool_spatial(x, "max"))
        grads = tape.backward(loss)
        assert np.array_equal(grads["x"].data, [[[[1.0, 0.0], [0.0, 0.0]]]])

    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_avg_pool_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 3, 4, 4))
        shuffled = x.reshape(2, 3, 16)[:, :, rng.permutation(16)].reshape(2, 3, 4, 4)
        a = pool_spatial(t(x), "avg").data
        b = pool_spatial(t(shuffled), "avg").data
        np.testing.assert_allclose(a, b, rtol=1e-12)

    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_max_pool_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 3, 4, 4))
        shuffled = x.reshape(2, 3, 16)[:, :, rng.permutation(16)].reshape(2, 3, 4, 4)
        a = pool_spatial(t(x), "max").data
        b = pool_spatial(t(shuffled), "max").data
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_frame_pairs_max_pool(self):
        x = t(np.array([[1.0], [4.0], [2.0], [2.0], [9.0]]))
        out = pool_frames_max(x)
        # odd trailing frame is dropped; ties take the earlier frame
        assert np.array_equal(out.data, [[4.0], [2.0]])

    def test_pool_gradients(self):
        rng = np.random.default_rng(14)
        params = {"x": t(rng.normal(size=(4, 3, 3, 3)))}

        def loss_avg(p):
            return tt.tensor_sum(pool_spatial(p["x"], "avg") * t(np.full((4, 3, 1, 1), 2.0)))

        def loss_time(p):
            pooled = pool_spatial(p["x"], "avg")
            seq = tt.reshape(pooled, (4, 3))
            return tt.tensor_sum(pool_frames_max(seq))

        assert grad_check_fd(loss_avg, params) < 1e-6
        assert grad_check_fd(loss_time, params) < 1e-6
