import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mvssnet import ops
from mvssnet.autodiff import (
    DimensionError,
    DomainError,
    Parameter,
    Tape,
    Tensor,
    UsageError,
    grad_check,
    no_grad,
)
from mvssnet.layers import GemHead, gem_pool

from conftest import conv_loop, leaf, param

finite = st.floats(min_value=-3, max_value=3, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- conv2d


def test_conv_all_ones_counts_overlaps():
    x = Tensor(np.ones((1, 1, 3, 3)))
    w = Parameter(np.ones((1, 1, 3, 3)))
    out = ops.conv2d(x, w, stride=1, padding=1).data[0, 0]
    assert out[1, 1] == 9.0
    assert out[0, 0] == 4.0


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv_identity_delta(rng, k):
    x = Tensor(rng.normal(size=(2, 1, 7, 6)))
    w = np.zeros((1, 1, k, k))
    w[0, 0, k // 2, k // 2] = 1.0
    out = ops.conv2d(x, Parameter(w), padding=k // 2)
    np.testing.assert_array_equal(out.data, x.data)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (3, 2)])
def test_conv_matches_loop_oracle(rng, stride, padding):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = ops.conv2d(Tensor(x), Parameter(w), Parameter(b), stride, padding)
    ref = conv_loop(x, w, b, stride, padding)
    assert out.shape == ref.shape
    np.testing.assert_allclose(out.data, ref, rtol=0, atol=1e-12)


def test_conv_shape_errors(rng):
    with pytest.raises(DimensionError, match="axis 1"):
        ops.conv2d(Tensor(np.zeros((1, 2, 5, 5))), param(rng, 1, 3, 3, 3))
    with pytest.raises(DimensionError):
        ops.conv2d(Tensor(np.zeros((1, 3, 2, 2))), param(rng, 1, 3, 3, 3))


@pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (2, 0)])
def test_conv_gradcheck(rng, stride, padding):
    x = leaf(rng, 2, 3, 6, 6)
    w = param(rng, 2, 3, 3, 3)
    b = param(rng, 2)
    err = grad_check(lambda x, w, b: ops.sum(ops.conv2d(x, w, b, stride, padding)), [x, w, b])
    assert err < 1e-5


def test_conv_gradcheck_nonlinear_loss(rng):
    # a plain sum gives constant upstream gradients; square it to exercise the scatter
    x = leaf(rng, 1, 2, 5, 5)
    w = param(rng, 3, 2, 3, 3)
    err = grad_check(lambda x, w: ops.sum(ops.pow(ops.conv2d(x, w, padding=1), 2)), [x, w])
    assert err < 1e-5


# ---------------------------------------------------------------- batchnorm


def test_batchnorm_constant_input_gives_beta():
    x = Tensor(np.full((2, 3, 4, 4), 5.0))
    beta = Parameter(np.array([0.1, -2.0, 3.0]))
    out = ops.batchnorm2d(x, Parameter(np.ones(3) * 7), beta, ops.BNState(3), training=True)
    np.testing.assert_allclose(out.data, np.broadcast_to(beta.data[None, :, None, None], x.shape))


def test_batchnorm_normalises(rng):
    x = Tensor(rng.normal(3.0, 5.0, size=(4, 2, 5, 5)))
    out = ops.batchnorm2d(x, Parameter(np.ones(2)), Parameter(np.zeros(2)), ops.BNState(2), True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-6)


def test_batchnorm_eval_scalar():
    st_ = ops.BNState(1)
    st_.running_mean[:] = 2.0
    st_.running_var[:] = 4.0
    out = ops.batchnorm2d(Tensor(np.full((1, 1, 1, 1), 4.0)), Parameter([3.0]), Parameter([1.0]), st_, False)
    assert out.item() == pytest.approx(3 * 2 / np.sqrt(4 + 1e-5) + 1, abs=1e-12)
    assert out.item() == pytest.approx(3.99999, abs=1e-5)


def test_batchnorm_running_stats_momentum(rng):
    x = rng.normal(size=(2, 1, 3, 3))
    st_ = ops.BNState(1)
    ops.batchnorm2d(Tensor(x), Parameter([1.0]), Parameter([0.0]), st_, True)
    assert st_.running_mean[0] == pytest.approx(0.1 * x.mean())
    assert st_.running_var[0] == pytest.approx(0.9 + 0.1 * x.var(ddof=1))


def test_batchnorm_degenerate():
    with pytest.raises(DomainError):
        ops.batchnorm2d(Tensor(np.ones((1, 2, 1, 1))), Parameter(np.ones(2)), Parameter(np.zeros(2)),
                        ops.BNState(2), True)


@pytest.mark.parametrize("training", [True, False])
def test_batchnorm_gradcheck(rng, training):
    st_ = ops.BNState(3)
    st_.running_mean[:] = rng.normal(size=3)
    st_.running_var[:] = rng.uniform(0.5, 2, size=3)
    x = leaf(rng, 2, 3, 3, 3)
    g = param(rng, 3)
    b = param(rng, 3)
    wts = rng.normal(size=(2, 3, 3, 3))
    err = grad_check(lambda x, g, b: ops.sum(ops.batchnorm2d(x, g, b, st_, training) * Tensor(wts)), [x, g, b])
    assert err < 1e-5


# ---------------------------------------------------------------- pointwise


def test_pointwise_values():
    assert ops.sigmoid(Tensor(0.0)).item() == 0.5
    assert ops.relu(Tensor(-3.0)).item() == 0.0
    assert ops.relu(Tensor(3.0)).item() == 3.0
    x = Tensor(0.5, requires_grad=True)
    y = ops.pointwise(x, "pow", 2)
    assert y.item() == 0.25
    y.backward()
    assert x.grad == pytest.approx(1.0)


def test_pow_domain():
    with pytest.raises(DomainError):
        ops.pow(Tensor([-1.0, 2.0]), 0.5)
    ops.pow(Tensor([-1.0, 2.0]), 2)


def test_sigmoid_extreme_inputs_finite():
    x = Tensor([-1000.0, 0.0, 1000.0], requires_grad=True)
    y = ops.sigmoid(x)
    ops.sum(y).backward()
    assert np.all(np.isfinite(y.data)) and np.all(np.isfinite(x.grad))


@pytest.mark.parametrize("kind,arg", [("relu", None), ("sigmoid", None), ("pow", 2.0), ("pow", 1.7),
                                      ("scale", -2.5), ("add", 3.0)])
def test_pointwise_gradcheck(rng, kind, arg):
    low = 0.1 if kind == "pow" else -2.0
    x = leaf(rng, 2, 2, 3, 3, low=low, high=2.0)
    err = grad_check(lambda x: ops.sum(ops.pow(ops.pointwise(x, kind, arg), 2)), [x])
    assert err < 1e-5


def test_sigmoid_sum_gradcheck_tight(rng):
    x = leaf(rng, 2, 3, 4, 4, low=-3, high=3)
    assert grad_check(lambda x: ops.sum(ops.sigmoid(x)), [x]) < 1e-6


def test_tensor_exponent_pow_gradcheck(rng):
    x = leaf(rng, 1, 1, 4, 4, low=0.05, high=0.95)
    p = Parameter([2.3])
    assert grad_check(lambda x, p: ops.sum(ops.pow(x, p)), [x, p]) < 1e-5


def test_gem_gradcheck_including_p(rng):
    head = GemHead(2.5)
    x = leaf(rng, 2, 1, 4, 4, low=-2, high=2)
    err = grad_check(lambda x, p: ops.sum(gem_pool(ops.sigmoid(x), head)), [x, head.p])
    assert err < 1e-5


# ---------------------------------------------------------------- matmul / softmax


def test_matmul_identity_and_hand_example(rng):
    m = rng.normal(size=(1, 3, 3))
    np.testing.assert_array_equal(ops.matmul(Tensor(np.eye(3)[None]), Tensor(m)).data, m)
    out = ops.matmul(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), Tensor([[[5.0, 6.0], [7.0, 8.0]]]))
    np.testing.assert_array_equal(out.data, [[[19.0, 22.0], [43.0, 50.0]]])


def test_matmul_loop_oracle(rng):
    a = rng.normal(size=(2, 3, 4))
    b = rng.normal(size=(2, 4, 5))
    ref = np.zeros((2, 3, 5))
    for n in range(2):
        for i in range(3):
            for j in range(5):
                for k in range(4):
                    ref[n, i, j] += a[n, i, k] * b[n, k, j]
    np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, ref, atol=1e-12, rtol=0)


def test_matmul_errors():
    with pytest.raises(DimensionError, match="inner"):
        ops.matmul(Tensor(np.zeros((1, 2, 3))), Tensor(np.zeros((1, 2, 3))))


def test_matmul_gradcheck(rng):
    a, b = leaf(rng, 2, 3, 4), leaf(rng, 2, 4, 5)
    assert grad_check(lambda a, b: ops.sum(ops.pow(ops.matmul(a, b), 2)), [a, b]) < 1e-5


def test_softmax_values():
    out = ops.softmax(Tensor([[1.0, 2.0]]), axis=-1).data[0]
    np.testing.assert_allclose(out, [0.26894142, 0.73105858], atol=1e-8)
    np.testing.assert_allclose(ops.softmax(Tensor(np.full((2, 4), 3.3)), axis=1).data, 0.25)


@settings(deadline=None, max_examples=50)
@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100), st.sampled_from([0, 1]))
def test_softmax_properties(x, c, axis):
    y = ops.softmax(Tensor(x), axis=axis).data
    assert np.all(y > 0)
    np.testing.assert_allclose(y.sum(axis=axis), 1.0, atol=1e-12)
    np.testing.assert_allclose(ops.softmax(Tensor(x + c), axis=axis).data, y, atol=1e-12)


def test_softmax_gradcheck(rng):
    x = leaf(rng, 2, 3, 4, low=-3, high=3)
    w = Tensor(rng.normal(size=(2, 3, 4)))
    assert grad_check(lambda x: ops.sum(ops.softmax(x, axis=1) * w), [x]) < 1e-5


# ---------------------------------------------------------------- upsample


def test_upsample_ramp_align_corners():
    out = ops.bilinear_upsample(Tensor([[[[0.0, 1.0], [0.0, 1.0]]]]), 2, 4).data[0, 0]
    np.testing.assert_allclose(out[0], [0, 1 / 3, 2 / 3, 1], atol=1e-15)
    np.testing.assert_allclose(out[1], [0, 1 / 3, 2 / 3, 1], atol=1e-15)


def test_upsample_identity_and_errors(rng):
    x = Tensor(rng.normal(size=(1, 2, 3, 3)))
    assert ops.bilinear_upsample(x, 3, 3).data is x.data
    with pytest.raises(DimensionError):
        ops.bilinear_upsample(x, 0, 4)
    with pytest.raises(DimensionError):
        ops.bilinear_upsample(x, 2, 4)


@settings(deadline=None, max_examples=40)
@given(st.floats(-10, 10), st.integers(1, 5), st.integers(1, 5), st.integers(0, 11), st.integers(0, 11))
def test_upsample_preserves_constants(c, h, w, dh, dw):
    out = ops.bilinear_upsample(Tensor(np.full((1, 1, h, w), c)), h + dh, w + dw).data
    np.testing.assert_allclose(out, c, atol=1e-12, rtol=0)


@settings(deadline=None, max_examples=30)
@given(arrays(np.float64, (1, 2, 3, 4), elements=finite), arrays(np.float64, (1, 2, 3, 4), elements=finite),
       finite, finite)
def test_upsample_linear(X, Y, a, b):
    up = lambda t: ops.bilinear_upsample(Tensor(t), 7, 9).data  # noqa: E731
    np.testing.assert_allclose(up(a * X + b * Y), a * up(X) + b * up(Y), atol=1e-12, rtol=0)


def test_upsample_gradcheck(rng):
    x = leaf(rng, 2, 1, 3, 4)
    w = Tensor(rng.normal(size=(2, 1, 8, 9)))
    assert grad_check(lambda x: ops.sum(ops.bilinear_upsample(x, 8, 9) * w), [x]) < 1e-5


# ---------------------------------------------------------------- reductions


def test_reduce_values():
    assert ops.reduce(Tensor(np.ones((1, 1, 2, 3))), "sum").item() == 6.0
    assert ops.reduce(Tensor([1.0, 3.0]), "mean").item() == 2.0
    x = Tensor([0.2, 0.9, 0.9], requires_grad=True)
    m = ops.reduce(x, "max")
    assert m.item() == 0.9
    m.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_max_first_argmax_multi_axis():
    x = Tensor(np.array([[[[1.0, 5.0], [5.0, 0.0]]], [[[2.0, 2.0], [2.0, 2.0]]]]), requires_grad=True)
    ops.sum(ops.max(x, axes=(1, 2, 3))).backward()
    np.testing.assert_array_equal(x.grad.reshape(2, 4), [[0, 1, 0, 0], [1, 0, 0, 0]])


@pytest.mark.parametrize("kind", ["sum", "mean", "max"])
@pytest.mark.parametrize("axes", [None, 1, (2, 3), (0, 2)])
def test_reduce_gradcheck(rng, kind, axes):
    x = leaf(rng, 2, 3, 3, 4)
    assert grad_check(lambda x: ops.sum(ops.pow(ops.reduce(x, kind, axes), 2)), [x]) < 1e-5


def test_shape_ops_gradcheck(rng):
    a, b = leaf(rng, 1, 2, 3, 3), leaf(rng, 1, 1, 3, 3)
    w = Tensor(rng.normal(size=(1, 3, 5, 5)))

    def f(a, b):
        c = ops.concat([a, b], axis=1)
        c = ops.pad_replicate(c, 1)
        c = ops.transpose(ops.reshape(c, (3, 5, 5)), (0, 2, 1))
        return ops.sum(ops.reshape(c, (1, 3, 5, 5)) * w)

    assert grad_check(f, [a, b]) < 1e-5


# ---------------------------------------------------------------- tape mechanics


def test_shared_subexpression_accumulates(rng):
    x = leaf(rng, 1, 1, 3, 3)

    def f(x):
        s = ops.sigmoid(x)
        return ops.sum(s * s + s)

    assert grad_check(f, [x]) < 1e-6
    x.grad = None
    f(x).backward()
    s = 1 / (1 + np.exp(-x.data))
    np.testing.assert_allclose(x.grad, (2 * s + 1) * s * (1 - s), rtol=1e-12)


def test_tape_reverse_order(rng):
    x = leaf(rng, 1, 1, 2, 2)
    y = ops.sum(ops.relu(ops.scale(ops.sigmoid(x), 2.0)))
    tape = Tape.from_output(y)
    assert tape.ops == ["sigmoid", "scale", "relu", "sum"]
    visited = tape.backward()
    assert [n.op for n in visited] == ["sum", "relu", "scale", "sigmoid"]
    assert x.grad is not None


def test_backward_populates_all_reachable_leaves(rng):
    a, b, c = leaf(rng, 2), leaf(rng, 2), leaf(rng, 2)
    unused = leaf(rng, 2)
    ops.sum(a * b + ops.exp(c)).backward()
    assert all(t.grad is not None for t in (a, b, c))
    assert unused.grad is None


def test_no_grad_records_nothing(rng):
    x = leaf(rng, 3)
    with no_grad():
        y = ops.sigmoid(x)
    assert y.node is None and not y.requires_grad


def test_grad_check_rejects_non_scalar(rng):
    x = leaf(rng, 3)
    with pytest.raises(UsageError):
        grad_check(lambda x: ops.sigmoid(x), [x])
    with pytest.raises(UsageError):
        grad_check(lambda x: ops.sum(x), [x], eps=1e-2)


def test_all_finite_after_backward(rng):
    x = leaf(rng, 2, 3, 5, 5, low=-40, high=40)
    w = param(rng, 2, 3, 3, 3)
    y = ops.sum(ops.softmax(ops.reshape(ops.conv2d(x, w, padding=1), (2, 2, 25)), axis=-1))
    y.backward()
    assert np.all(np.isfinite(x.grad)) and np.all(np.isfinite(w.grad))


PRIMITIVES = {
    "conv2d": lambda x, w: ops.sum(ops.pow(ops.conv2d(x, w, padding=1), 2)),
    "sigmoid": lambda x, w: ops.sum(ops.sigmoid(x) * ops.sum(w)),
    "softmax": lambda x, w: ops.sum(ops.softmax(x, axis=1) * ops.sum(w, axes=0)),
    "upsample": lambda x, w: ops.sum(ops.pow(ops.bilinear_upsample(x, 5, 6), 2) * ops.sum(w)),
    "mean": lambda x, w: ops.sum(ops.pow(ops.mean(x, axes=(2, 3)), 2) + ops.sum(w)),
}


@pytest.mark.parametrize("name", list(PRIMITIVES))
def test_random_trials_gradcheck(name):
    """100 random trials per primitive at float64 precision."""
    f = PRIMITIVES[name]
    for trial in range(100):
        r = np.random.default_rng(trial)
        x = leaf(r, 1, 2, 3, 3, low=-2, high=2)
        w = param(r, 2, 2, 3, 3)
        assert grad_check(f, [x, w]) < 1e-5, f"{name} trial {trial}"
