"""Differentiable primitives.

All functions take and return :class:`~mvssnet.autodiff.Tensor`.  Feature
maps are (n, c, h, w); attention products use rank-3 views (n, r, k).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import (
    DTYPE,
    DimensionError,
    DomainError,
    Tensor,
    UsageError,
    as_tensor,
    make_result,
)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), backward, "div")


# ---------------------------------------------------------------- pointwise


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log of nonpositive value")
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def scale(x: Tensor, a: float) -> Tensor:
    return make_result(x.data * a, (x,), lambda g: (g * a,), "scale")


def add_const(x: Tensor, b: float) -> Tensor:
    return make_result(x.data + b, (x,), lambda g: (g,), "add_const")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return make_result(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clamp")


def pow(x: Tensor, q) -> Tensor:
    """Elementwise ``x ** q``; ``q`` may be a float or a single-element Tensor."""
    if isinstance(q, Tensor):
        return _pow_tensor(x, q)
    q = float(q)
    if not q.is_integer() and np.any(x.data < 0):
        raise DomainError(f"negative base with fractional exponent {q}")
    out = np.power(x.data, q)

    def backward(g):
        return (g * q * np.power(x.data, q - 1.0),)

    return make_result(out, (x,), backward, "pow")


def _pow_tensor(x: Tensor, p: Tensor) -> Tensor:
    if p.size != 1:
        raise DimensionError(f"exponent tensor must have one element, got {p.shape}")
    if np.any(x.data <= 0):
        raise DomainError("tensor exponent requires a strictly positive base")
    pv = p.data.reshape(-1)[0]
    out = np.power(x.data, pv)

    def backward(g):
        gx = g * pv * np.power(x.data, pv - 1.0) if x.requires_grad else None
        gp = np.full(p.shape, np.sum(g * out * np.log(x.data))) if p.requires_grad else None
        return gx, gp

    return make_result(out, (x, p), backward, "pow")


def sqrt(x: Tensor) -> Tensor:
    return pow(x, 0.5)


def pointwise(x: Tensor, kind: str, arg: float | None = None) -> Tensor:
    """Dispatch by name: relu, sigmoid, pow(q), scale(a), add(b)."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "pow":
        return pow(x, arg)
    if kind == "scale":
        return scale(x, arg)
    if kind == "add":
        return add_const(x, arg)
    raise UsageError(f"unknown pointwise kind {kind!r}")


# ---------------------------------------------------------------- shape ops


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inv = np.argsort(axes)
    return make_result(
        np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),), "transpose"
    )


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(ref) or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise DimensionError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    splits = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in xs], axis=axis), xs, backward, "concat")


def take(x: Tensor, indices, axis: int) -> Tensor:
    """Gather along one axis; repeated indices accumulate on backward."""
    idx = np.asarray(indices, dtype=np.intp)
    axis = axis % x.ndim

    def backward(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return make_result(np.take(x.data, idx, axis=axis), (x,), backward, "take")


def pad_replicate(x: Tensor, p: int) -> Tensor:
    """Edge-replicate padding of the two trailing (spatial) axes."""
    h, w = x.shape[-2:]
    out = take(x, np.clip(np.arange(-p, h + p), 0, h - 1), axis=-2)
    return take(out, np.clip(np.arange(-p, w + p), 0, w - 1), axis=-1)


# ---------------------------------------------------------------- convolution


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with zero padding.

    Windows are gathered with ``sliding_window_view`` and contracted in a
    single ``tensordot``; backward scatters window gradients back per kernel
    offset.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d needs rank-4 input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = weight.shape
    if c != c_in:
        raise DimensionError(f"conv2d: input channels (axis 1) = {c} but weight expects {c_in}")
    if stride < 1 or padding < 0:
        raise UsageError(f"invalid stride {stride} / padding {padding}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} too large for spatial axes (2, 3) = {h}x{w} with padding {padding}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({c_out},)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # (n, oh, ow, c_out)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data[None, :, None, None]

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            gcols = np.tensordot(g, weight.data, axes=([1], [0]))  # (n, oh, ow, c, kh, kw)
            gxp = np.zeros(xp.shape, dtype=DTYPE)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_result(out, inputs, backward, "conv2d")


# ---------------------------------------------------------------- batchnorm


class BNState:
    """Running statistics for one batchnorm layer."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.running_mean = np.zeros(channels, dtype=DTYPE)
        self.running_var = np.ones(channels, dtype=DTYPE)
        self.momentum = momentum
        self.eps = eps


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BNState, training: bool) -> Tensor:
    """Per-channel normalisation; train mode uses batch stats and updates ``state``."""
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm2d: gamma/beta must have shape ({c},), got {gamma.shape}/{beta.shape}")
    shape = (1, c, 1, 1)
    if training:
        m = n * h * w
        if m < 2:
            raise DomainError("batchnorm2d: train mode needs at least 2 values per channel (batch*h*w >= 2)")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        mom = state.momentum
        state.running_mean = mom * state.running_mean + (1 - mom) * mean
        state.running_var = mom * state.running_var + (1 - mom) * var * m / (m - 1)
    else:
        m = None
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(shape)
            if training:
                s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = inv_std.reshape(shape) / m * (m * dxhat - s1 - xhat * s2)
            else:
                gx = dxhat * inv_std.reshape(shape)
        return gx, ggamma, gbeta

    return make_result(out, (x, gamma, beta), backward, "batchnorm2d")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched product of (n, r, k) and (n, k, s)."""
    if a.ndim != 3 or b.ndim != 3:
        raise DimensionError(f"matmul expects rank-3 operands, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"matmul: batch axis 0 differs ({a.shape[0]} vs {b.shape[0]})")
    if a.shape[2] != b.shape[1]:
        raise DimensionError(f"matmul: inner dimensions differ (a axis 2 = {a.shape[2]}, b axis 1 = {b.shape[1]})")

    def backward(g):
        ga = np.matmul(g, b.data.transpose(0, 2, 1)) if a.requires_grad else None
        gb = np.matmul(a.data.transpose(0, 2, 1), g) if b.requires_grad else None
        return ga, gb

    return make_result(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise UsageError(f"softmax axis {axis} invalid for rank {x.ndim}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward, "softmax")


# ---------------------------------------------------------------- resampling


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    # align-corners: output i samples input position i*(n_in-1)/(n_out-1)
    A = np.zeros((n_out, n_in), dtype=DTYPE)
    if n_out == 1 or n_in == 1:
        A[:, 0] = 1.0
        return A
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    A[np.arange(n_out), lo] = 1.0 - frac
    A[np.arange(n_out), lo + 1] += frac
    return A


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resize of the spatial axes to a larger grid."""
    h, w = x.shape[-2:]
    if out_h <= 0 or out_w <= 0:
        raise DimensionError(f"bilinear_upsample: target size {out_h}x{out_w} must be positive")
    if out_h < h or out_w < w:
        raise DimensionError(f"bilinear_upsample: target {out_h}x{out_w} smaller than input {h}x{w}")
    if (out_h, out_w) == (h, w):
        return x
    Ah = _interp_matrix(out_h, h)
    Aw = _interp_matrix(out_w, w)
    out = Ah @ x.data @ Aw.T

    def backward(g):
        return (Ah.T @ g @ Aw,)

    return make_result(out, (x,), backward, "bilinear_upsample")


# ---------------------------------------------------------------- reductions


def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for a in axes:
        if not -ndim <= a < ndim:
            raise UsageError(f"axis {a} invalid for rank {ndim}")
        out.append(a % ndim)
    return tuple(sorted(set(out)))


def sum(x: Tensor, axes=None, keepdims: bool = True) -> Tensor:  # noqa: A001
    axes = _norm_axes(axes, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(out, (x,), backward, "sum")


def mean(x: Tensor, axes=None, keepdims: bool = True) -> Tensor:
    axes = _norm_axes(axes, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make_result(out, (x,), backward, "mean")


def max(x: Tensor, axes=None, keepdims: bool = True) -> Tensor:  # noqa: A001
    """Maximum; backward routes to the first argmax in row-major order."""
    axes = _norm_axes(axes, x.ndim)
    keep = [a for a in range(x.ndim) if a not in axes]
    perm = keep + list(axes)
    moved = x.data.transpose(perm)
    lead = moved.shape[: len(keep)]
    flat = moved.reshape(lead + (-1,))
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    if keepdims:
        out = np.expand_dims(out, axes)

    def backward(g):
        gflat = np.zeros_like(flat)
        gv = g.reshape(lead)
        np.put_along_axis(gflat, arg[..., None], gv[..., None], axis=-1)
        return (gflat.reshape(moved.shape).transpose(np.argsort(perm)),)

    return make_result(out, (x,), backward, "max")


def reduce(x: Tensor, kind: str, axes=None, keepdims: bool = True) -> Tensor:
    if kind == "sum":
        return sum(x, axes, keepdims)
    if kind == "mean":
        return mean(x, axes, keepdims)
    if kind == "max":
        return max(x, axes, keepdims)
    raise UsageError(f"unknown reduction {kind!r}")
