"""Differentiable kernels. Every op returns a Tensor and, when a tape is
active and any input requires grad, records its backward rule."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, Tensor, as_tensor, make_op

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_op(
        a.data * b.data, (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return make_op(
        out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        ),
        "div",
    )


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return make_op(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),), "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def gelu(a: Tensor) -> Tensor:
    """tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    x = a.data
    c = x.dtype.type(_SQRT_2_OVER_PI)
    k = x.dtype.type(0.044715)
    x2 = x * x
    th = x2 * k
    th += 1
    th *= x
    th *= c
    np.tanh(th, out=th)
    out = th + 1
    out *= x
    out *= 0.5

    def backward(g):
        # d/dx = 0.5 (1 + th) + 0.5 x (1 - th^2) c (1 + 3k x^2)
        d = th * th
        np.subtract(1, d, out=d)
        d *= x
        inner = x2 * (3 * k)
        inner += 1
        inner *= c
        d *= inner
        d += th
        d += 1
        d *= 0.5
        d *= g
        return (d,)

    return make_op(out, (a,), backward, "gelu")


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity when not training or rate == 0."""
    if not training or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / a.dtype.type(1.0 - rate)
    return make_op(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    return make_op(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(None))) or i is Ellipsis for i in items)


def index(a: Tensor, idx) -> Tensor:
    basic = _is_basic_index(idx)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_op(np.asarray(a.data[idx]), (a,), backward, "index")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    return make_op(
        np.concatenate([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.split(g, bounds, axis=axis)), "concat",
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    return make_op(
        np.stack([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.moveaxis(g, axis, 0)), "stack",
    )


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise DimensionError(f"matmul: inner dimensions {a.shape} @ {b.shape} disagree")

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return make_op(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W + b`` over the last axis of ``x``; W is stored (d_in, d_out)."""
    if x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear: input width {x.shape[-1]} != weight rows {W.shape[0]}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError(f"linear: bias shape {b.shape} != ({W.shape[1]},)")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    if b is not None:
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape) if x.requires_grad else None
        gW = x2.T @ g2 if W.requires_grad else None
        gb = g2.sum(axis=0) if b is not None and b.requires_grad else None
        return gx, gW, gb

    parents = (x, W) if b is None else (x, W, b)
    return make_op(out.reshape(*lead, W.shape[1]), parents, backward, "linear")


# ---------------------------------------------------------------------------
# normalisations
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op(y, (x,), backward, "softmax")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of an (n, m) tensor, max-shifted for stability."""
    return softmax(x, axis=-1)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_op(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis then apply an elementwise affine map."""
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx = ggamma = gbeta = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        if gamma.requires_grad:
            ggamma = (g * xhat).reshape(-1, d).sum(axis=0)
        if beta.requires_grad:
            gbeta = g.reshape(-1, d).sum(axis=0)
        return gx, ggamma, gbeta

    return make_op(out.astype(x.dtype, copy=False), (x, gamma, beta), backward, "layer_norm")


def rms_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Divide by the root-mean-square over the last axis (no affine)."""
    d = x.shape[-1]
    r = np.sqrt((x.data * x.data).mean(axis=-1, keepdims=True) + eps)
    out = x.data / r

    def backward(g):
        return (g / r - x.data * (g * x.data).sum(axis=-1, keepdims=True) / (d * r ** 3),)

    return make_op(out, (x,), backward, "rms_norm")


# ---------------------------------------------------------------------------
# 1-d convolution family; layout (batch, channels, time)
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation. x: (c_in, t) or (B, c_in, t); w: (c_out, c_in, k)."""
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    B, c_in, t = xd.shape
    c_out, wc_in, k = w.shape
    if wc_in != c_in:
        raise DimensionError(f"conv1d: input has {c_in} channels, kernel expects {wc_in}")
    tp = t + 2 * padding
    if k > tp:
        raise DimensionError(f"conv1d: kernel {k} longer than padded input {tp}")
    t_out = (tp - k) // stride + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    # (B, c_in, t_out, k) -> (B, t_out, c_in*k)
    cols = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B, t_out, c_in * k)
    wm = w.data.reshape(c_out, c_in * k)
    out = cols @ wm.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.transpose(0, 2, 1))

    def backward(g):
        if squeeze:
            g = g[None]
        gt = g.transpose(0, 2, 1)  # (B, t_out, c_out)
        gx = gw = gb = None
        if w.requires_grad:
            gw = (gt.reshape(-1, c_out).T @ cols.reshape(-1, c_in * k)).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2))
        if x.requires_grad:
            gcols = (gt @ wm).reshape(B, t_out, c_in, k)
            gxp = np.zeros((B, c_in, tp), dtype=xd.dtype)
            span = stride * (t_out - 1) + 1
            for j in range(k):
                gxp[:, :, j:j + span:stride] += gcols[:, :, :, j].transpose(0, 2, 1)
            gx = gxp[:, :, padding:padding + t] if padding else gxp
            if squeeze:
                gx = gx[0]
        return (gx, gw) if b is None else (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return make_op(out[0] if squeeze else out, parents, backward, "conv1d")


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Transposed convolution without padding. x: (B, c_in, t); w: (c_in, c_out, k).

    Output length is (t - 1) * stride + k.
    """
    B, c_in, t = x.shape
    wc_in, c_out, k = w.shape
    if wc_in != c_in:
        raise DimensionError(f"conv_transpose1d: input has {c_in} channels, kernel expects {wc_in}")
    t_out = (t - 1) * stride + k
    xt = x.data.transpose(0, 2, 1)  # (B, t, c_in)
    wm = w.data.reshape(c_in, c_out * k)
    contrib = (xt @ wm).reshape(B, t, c_out, k)
    span = stride * (t - 1) + 1
    if k == stride:
        out = contrib.transpose(0, 2, 1, 3).reshape(B, c_out, t_out)
    else:
        out = np.zeros((B, c_out, t_out), dtype=x.dtype)
        for j in range(k):
            out[:, :, j:j + span:stride] += contrib[:, :, :, j].transpose(0, 2, 1)
    if b is not None:
        out = out + b.data[None, :, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        # gather the cotangent back onto (B, t, c_out, k)
        if k == stride:
            gc = g.reshape(B, c_out, t, k).transpose(0, 2, 1, 3)
        else:
            gc = np.stack([g[:, :, j:j + span:stride] for j in range(k)], axis=-1).transpose(0, 2, 1, 3)
        gc = gc.reshape(B * t, c_out * k)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (gc @ wm.T).reshape(B, t, c_in).transpose(0, 2, 1)
        if w.requires_grad:
            gw = (xt.reshape(B * t, c_in).T @ gc).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2))
        return (gx, gw) if b is None else (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return make_op(out, parents, backward, "conv_transpose1d")


def max_pool1d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping max pooling over the last axis; a trailing remainder is dropped.

    Ties route the gradient to the first maximal element.
    """
    t = x.shape[-1]
    n = t // size
    if n < 1:
        raise DimensionError(f"max_pool1d: window {size} longer than input {t}")
    lead = x.shape[:-1]
    xr = x.data[..., : n * size].reshape(*lead, n, size)
    out = xr[..., 0].copy()
    for j in range(1, size):
        np.maximum(out, xr[..., j], out=out)

    def backward(g):
        gr = np.zeros_like(xr)
        free = np.ones(out.shape, dtype=bool)
        for j in range(size):
            hit = xr[..., j] == out
            hit &= free
            free &= ~hit
            gr[..., j] = g * hit
        if n * size == t:
            return (gr.reshape(x.shape),)
        gx = np.zeros_like(x.data)
        gx[..., : n * size] = gr.reshape(*lead, n * size)
        return (gx,)

    return make_op(out, (x,), backward, "max_pool1d")
