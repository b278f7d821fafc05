import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from olivine import core
from olivine.rng import make_rng, derive_seed
from oracles import central_diff, max_rel_err, naive_conv2d


def test_matmul_hand_value():
    out = core.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.0]]))
    assert np.array_equal(out, [[19, 22], [43, 50]])


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        core.conv2d_forward(np.ones((1, 2, 2)), np.ones((1, 1, 2, 2)))


def test_1x1_conv_sums_channels():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]])
    w = np.array([[[[1.0]], [[1.0]]]])
    assert np.array_equal(core.conv2d_forward(x, w), x[0:1] + x[1:2])


def test_all_ones_3x3_gives_nine():
    out = core.conv2d_forward(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)))
    assert out.shape == (1, 1, 1) and out[0, 0, 0] == 9.0


@pytest.mark.parametrize("stride,size", [(1, 5), (2, 6), (2, 7), (1, 4)])
def test_conv_matches_naive_loop(stride, size):
    rng = make_rng(1, stride, size)
    x = rng.standard_normal((2, size, size))
    w = rng.standard_normal((3, 2, 3, 3))
    pad = core.same_padding(size, 3, stride)
    expect = naive_conv2d(x, w, stride, pad)
    assert np.allclose(core.conv2d_forward(x, w, stride, pad), expect, atol=1e-12)


def test_depthwise_matches_naive_per_channel():
    rng = make_rng(2)
    x = rng.standard_normal((3, 6, 6))
    w = rng.standard_normal((3, 3, 3))
    pad = core.same_padding(6, 3, 2)
    out = core.depthwise_conv2d_forward(x, w, 2, pad)
    for c in range(3):
        ref = naive_conv2d(x[c : c + 1], w[c][None, None], 2, pad)
        assert np.allclose(out[c], ref[0], atol=1e-12)


def test_batched_and_unbatched_agree():
    rng = make_rng(3)
    x = rng.standard_normal((2, 3, 5, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    batched = core.conv2d_forward(x, w, 1, 1)
    for n in range(2):
        assert np.allclose(batched[n], core.conv2d_forward(x[n], w, 1, 1))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_finite_difference(stride):
    rng = make_rng(4, stride)
    x = rng.standard_normal((2, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    pad = core.same_padding(6, 3, stride)
    gy = rng.standard_normal(core.conv2d_forward(x, w, stride, pad).shape)
    gx, gw = core.conv2d_backward(x, w, gy, stride, pad)
    loss = lambda: float(np.sum(core.conv2d_forward(x, w, stride, pad) * gy))
    nx, nw = central_diff(loss, [x, w])
    assert max_rel_err(gx, nx) <= 1e-6
    assert max_rel_err(gw, nw) <= 1e-6


@pytest.mark.parametrize("stride", [1, 2])
def test_depthwise_backward_finite_difference(stride):
    rng = make_rng(5, stride)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((3, 3, 3))
    pad = core.same_padding(6, 3, stride)
    gy = rng.standard_normal(core.depthwise_conv2d_forward(x, w, stride, pad).shape)
    gx, gw = core.depthwise_conv2d_backward(x, w, gy, stride, pad)
    loss = lambda: float(np.sum(core.depthwise_conv2d_forward(x, w, stride, pad) * gy))
    nx, nw = central_diff(loss, [x, w])
    assert max_rel_err(gx, nx) <= 1e-6
    assert max_rel_err(gw, nw) <= 1e-6


def test_global_avg_pool_and_backward():
    x = np.arange(8.0).reshape(2, 2, 2)
    assert np.array_equal(core.global_avg_pool(x), [1.5, 5.5])
    g = core.global_avg_pool_backward(np.array([4.0, 8.0]), x.shape)
    assert np.array_equal(g[0], np.full((2, 2), 1.0)) and np.array_equal(g[1], np.full((2, 2), 2.0))


def test_output_size_rules():
    assert core.conv_output_size(224, 3, 2, core.same_padding(224, 3, 2)) == 112
    assert core.same_padding(224, 3, 2) == (0, 1)
    assert core.same_padding(7, 3, 2) == (1, 1)
    with pytest.raises(ValueError):
        core.conv_output_size(224, 3, 2, 1)
    with pytest.raises(ValueError):
        core.conv_output_size(5, 4, 1, 0)


def test_shape_errors():
    with pytest.raises(ValueError):
        core.conv2d_forward(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ValueError):
        core.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_argmax_ties_and_empty():
    assert core.argmax([1, 3, 3, 2]) == 1
    with pytest.raises(ValueError):
        core.argmax([])


def test_he_init_statistics_and_errors():
    w = core.he_init((200, 50), 50, make_rng(0))
    assert w.dtype == np.float32
    assert abs(w.std() - np.sqrt(2 / 50)) < 0.01
    with pytest.raises(ValueError):
        core.he_init((), 1, make_rng(0))
    with pytest.raises(ValueError):
        core.he_init((3,), 0, make_rng(0))


def test_rng_streams_are_reproducible_and_distinct():
    a = make_rng(7, 1).random(4)
    assert np.array_equal(a, make_rng(7, 1).random(4))
    assert not np.array_equal(a, make_rng(7, 2).random(4))
    assert derive_seed(3, 4) == derive_seed(3, 4) != derive_seed(3, 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(3, 7), st.integers(0, 2**31))
def test_conv_linear_in_input(c, size, seed):
    rng = make_rng(seed)
    x1, x2 = rng.standard_normal((2, c, size, size))
    w = rng.standard_normal((2, c, 3, 3))
    lhs = core.conv2d_forward(x1 + 2 * x2, w, 1, 1)
    rhs = core.conv2d_forward(x1, w, 1, 1) + 2 * core.conv2d_forward(x2, w, 1, 1)
    assert np.allclose(lhs, rhs, atol=1e-9)
