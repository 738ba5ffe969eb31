"""Autodiff core: value oracles, gradient checks, tape discipline."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slate import tensor as T
from slate.errors import ConfigError, NumericsError, ShapeError, UsageError


def p64(arr):
    return T.parameter(np.asarray(arr, dtype=np.float64), dtype=np.float64)


# ---------------------------------------------------------------------------
# frozen value oracles


def test_matmul_value():
    a = T.constant([[1.0, 2.0], [3.0, 4.0]])
    b = T.constant([[5.0, 6.0], [7.0, 8.0]])
    y = T.matmul(a, b)
    np.testing.assert_allclose(y.data, [[19.0, 22.0], [43.0, 50.0]])


def test_softmax_value():
    x = T.constant([[0.0, np.log(3.0)]])
    y = T.softmax_lastdim(x)
    np.testing.assert_allclose(y.data, [[0.25, 0.75]], rtol=1e-6)


def test_layer_norm_value():
    # token [1, 3]: mean 2, var 1 -> normalized [-1, 1] (up to eps)
    x = T.constant([[1.0, 3.0]])
    g = T.constant([1.0, 1.0])
    b = T.constant([0.0, 0.0])
    y = T.layer_norm(x, g, b)
    np.testing.assert_allclose(y.data, [[-1.0, 1.0]], atol=1e-4)


def test_lrelu_value():
    x = T.constant([-1.0, 0.0, 2.0])
    y = T.lrelu(x, slope=0.01)
    np.testing.assert_allclose(y.data, [-0.01, 0.0, 2.0])


def test_sigmoid_tanh_values():
    x = T.constant([0.0])
    np.testing.assert_allclose(T.sigmoid(x).data, [0.5])
    np.testing.assert_allclose(T.tanh(x).data, [0.0])


def test_square_gradient_at_three():
    x = p64([3.0])
    with T.Tape() as tape:
        y = T.tsum(T.mul(x, x))
    tape.backward(y)
    np.testing.assert_allclose(x.grad, [6.0])


# ---------------------------------------------------------------------------
# tape discipline


def test_backward_requires_scalar():
    x = p64([1.0, 2.0])
    with T.Tape() as tape:
        y = T.mul(x, x)
    with pytest.raises(UsageError):
        tape.backward(y)


def test_backward_inside_context_rejected():
    x = p64([1.0])
    with pytest.raises(UsageError):
        with T.Tape() as tape:
            y = T.tsum(T.mul(x, x))
            tape.backward(y)


def test_tape_single_use():
    x = p64([1.0])
    with T.Tape() as tape:
        y = T.tsum(x)
    tape.backward(y)
    with pytest.raises(UsageError):
        tape.backward(y)


def test_nested_tapes_rejected():
    with pytest.raises(UsageError):
        with T.Tape():
            with T.Tape():
                pass
    assert T._active_tape() is None


def test_unreachable_param_grad_is_none():
    x = p64([1.0])
    unused = p64([5.0])
    with T.Tape() as tape:
        y = T.tsum(T.mul(x, x))
    tape.backward(y)
    assert unused.grad is None
    assert x.grad is not None


def test_no_tape_records_nothing():
    x = p64([2.0])
    y = T.mul(x, x)
    assert y.requires_grad is False
    assert x.grad is None


def test_grad_accumulates_over_reuse():
    x = p64([2.0])
    with T.Tape() as tape:
        y = T.tsum(T.add(T.mul(x, x), T.mul(x, x)))
    tape.backward(y)
    np.testing.assert_allclose(x.grad, [8.0])


# ---------------------------------------------------------------------------
# shape plumbing


def test_matmul_shape_error_names_shapes():
    a = T.constant(np.zeros((2, 3)))
    b = T.constant(np.zeros((4, 2)))
    with pytest.raises(ShapeError, match=r"2, 3"):
        T.matmul(a, b)


def test_window_partition_roundtrip_14x8():
    rng = np.random.default_rng(0)
    x = T.constant(rng.standard_normal((14, 8, 32)))
    w = T.window_partition(x, 7, 4)
    assert w.shape == (4, 28, 32)
    back = T.window_reverse(w, 7, 4, 14, 8)
    np.testing.assert_array_equal(back.data, x.data)


def test_window_partition_rejects_non_tiling():
    x = T.constant(np.zeros((14, 8, 4)))
    with pytest.raises(ConfigError):
        T.window_partition(x, 4, 4)


def test_roll_inverse():
    rng = np.random.default_rng(1)
    x = T.constant(rng.standard_normal((2, 6, 4, 3)))
    y = T.roll_grid(T.roll_grid(x, 3, 2), -3, -2)
    np.testing.assert_array_equal(y.data, x.data)


def test_space_depth_roundtrip():
    rng = np.random.default_rng(2)
    x = T.constant(rng.standard_normal((6, 4, 5)))
    y = T.depth_to_space(T.space_to_depth(x, 2), 2)
    np.testing.assert_array_equal(y.data, x.data)


def test_space_to_depth_blocks():
    # 2x2 neighborhood of a single-channel grid lands in one token's channels
    x = T.constant(np.arange(16.0).reshape(4, 4, 1))
    y = T.space_to_depth(x, 2)
    assert y.shape == (2, 2, 4)
    np.testing.assert_array_equal(y.data[0, 0], [0.0, 1.0, 4.0, 5.0])


def test_concat_narrow_roundtrip():
    rng = np.random.default_rng(3)
    a = T.constant(rng.standard_normal((3, 4)))
    b = T.constant(rng.standard_normal((3, 2)))
    c = T.concat([a, b], axis=-1)
    assert c.shape == (3, 6)
    np.testing.assert_array_equal(T.narrow(c, -1, 4, 2).data, b.data)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(4)
    x = T.constant(rng.standard_normal((5, 7)) * 20.0)
    y = T.softmax_lastdim(x)
    np.testing.assert_allclose(y.data.sum(axis=-1), np.ones(5), atol=1e-12)


def test_softmax_nan_raises():
    x = T.constant([[0.0, np.nan]])
    with pytest.raises(NumericsError):
        T.softmax_lastdim(x)


def test_identity_grad_forward_and_backward():
    x = p64([0.1, -0.6, 0.9])
    vals = np.array([0.25, -0.75, 0.75])
    with T.Tape() as tape:
        y = T.identity_grad(x, vals)
        loss = T.tsum(y)
    np.testing.assert_allclose(y.data, vals)
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, np.ones(3))


# ---------------------------------------------------------------------------
# finite-difference agreement, float64


def _check(make_loss, wrt, rtol=1e-4):
    worst, failures = T.gradcheck(make_loss, wrt, eps=1e-6, rtol=rtol)
    assert not failures, f"worst rel err {worst:.3e}, first failures {failures[:3]}"


def test_fd_arithmetic():
    rng = np.random.default_rng(10)
    a = p64(rng.standard_normal((3, 4)))
    b = p64(rng.standard_normal((3, 4)) + 3.0)
    c = p64(rng.standard_normal(4))

    def loss():
        y = T.div(T.mul(T.add(a, c), T.sub(a, b)), b)
        return T.tsum(T.mul(y, y))

    _check(loss, [a, b, c])


def test_fd_matmul_linear():
    rng = np.random.default_rng(11)
    x = p64(rng.standard_normal((2, 5, 3)))
    w = p64(rng.standard_normal((3, 4)) * 0.5)
    b = p64(rng.standard_normal(4))

    def loss():
        y = T.linear(x, w, b)
        return T.tsum(T.mul(y, y))

    _check(loss, [x, w, b])


def test_fd_layer_norm():
    rng = np.random.default_rng(12)
    x = p64(rng.standard_normal((4, 6)))
    g = p64(rng.standard_normal(6))
    b = p64(rng.standard_normal(6))

    def loss():
        return T.tsum(T.mul(T.layer_norm(x, g, b), T.constant(rng2_fixed)))

    rng2_fixed = np.random.default_rng(120).standard_normal((4, 6))
    _check(loss, [x, g, b])


def test_fd_softmax_activations():
    rng = np.random.default_rng(13)
    x = p64(rng.standard_normal((3, 5)))
    probe = np.random.default_rng(130).standard_normal((3, 5))

    def loss():
        y = T.softmax_lastdim(x)
        y = T.add(T.tanh(y), T.sigmoid(y))
        y = T.lrelu(T.sub(y, 1.0), slope=0.01)
        return T.tsum(T.mul(y, T.constant(probe)))

    _check(loss, [x])


def test_fd_reductions_and_moves():
    rng = np.random.default_rng(14)
    x = p64(rng.standard_normal((4, 4, 3)))

    def loss():
        y = T.roll_grid(x, 1, 2)
        y = T.window_partition(y, 2, 2)
        y = T.window_reverse(y, 2, 2, 4, 4)
        y = T.transpose(y, (1, 0, 2))
        a = T.narrow(y, -1, 0, 2)
        b = T.narrow(y, -1, 2, 1)
        y = T.concat([a, b, b], axis=-1)
        return T.tmean(T.mul(y, y))

    _check(loss, [x])


def test_fd_broadcast_add_mul():
    rng = np.random.default_rng(15)
    a = p64(rng.standard_normal((2, 1, 3)))
    b = p64(rng.standard_normal((4, 1)))

    def loss():
        return T.tsum(T.mul(T.add(a, b), T.add(a, b)))

    _check(loss, [a, b])


# ---------------------------------------------------------------------------
# properties


@given(
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=0, max_value=1000),
)
@settings(max_examples=40, deadline=None)
def test_window_roundtrip_property(nh, nw, wh, ww, seed):
    rng = np.random.default_rng(seed)
    x = T.constant(rng.standard_normal((nh * wh, nw * ww, 2)))
    w = T.window_partition(x, wh, ww)
    assert w.shape == (nh * nw, wh * ww, 2)
    np.testing.assert_array_equal(T.window_reverse(w, wh, ww, nh * wh, nw * ww).data, x.data)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_add_commutes_with_numpy(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    y = T.add(T.constant(a), T.constant(b))
    np.testing.assert_array_equal(y.data, a + b)


def test_deterministic_forward_backward():
    def run():
        rng = np.random.default_rng(99)
        x = T.parameter(rng.standard_normal((8, 16)).astype(np.float32))
        w = T.parameter(rng.standard_normal((16, 16)).astype(np.float32) * 0.1)
        with T.Tape() as tape:
            y = T.softmax_lastdim(T.matmul(x, w))
            loss = T.tsum(T.mul(y, y))
        tape.backward(loss)
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    l1, gx1, gw1 = run()
    l2, gx2, gw2 = run()
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_array_equal(gx1, gx2)
    np.testing.assert_array_equal(gw1, gw2)
