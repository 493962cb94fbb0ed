"""Differentiable primitives.

Image-like tensors are channels-first (N, C, H, W) for the convolution and
pooling family; the spatial primitives (pad2d, avg_pool2d, resize_bilinear)
act on the last two axes of any tensor. Binary elementwise ops accept equal
shapes, a scalar operand, or a per-channel vector (one non-unit axis);
anything else must be made explicit with :func:`expand` or :func:`reshape`.
"""
from __future__ import annotations

import builtins
import math
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, as_tensor, make_op


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _const(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _check_broadcast(a: tuple, b: tuple, op: str) -> tuple:
    if a == b:
        return a
    for small, big in ((a, b), (b, a)):
        if int(np.prod(small)) == 1 and len(small) <= len(big):
            return big
    for small, big in ((a, b), (b, a)):
        if len(small) == len(big) and sum(s != 1 for s in small) == 1:
            if all(s == 1 or s == t for s, t in zip(small, big)):
                return big
    raise ShapeError(f"{op}: incompatible shapes {a} and {b} (only scalar or per-channel broadcasting)")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _const(a, b if isinstance(b, Tensor) else None), _const(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _const(a, b if isinstance(b, Tensor) else None), _const(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return make_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _const(a, b if isinstance(b, Tensor) else None), _const(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data

    def bw(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return make_op(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _const(a, b if isinstance(b, Tensor) else None), _const(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a.shape, b.shape, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return (
            _unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None,
        )

    return make_op(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def pow(a: Tensor, exponent: float) -> Tensor:
    if isinstance(exponent, Tensor):
        raise TypeError("pow supports scalar exponents only")
    x = a.data
    p = float(exponent)

    def bw(g):
        return (g * p * x ** (p - 1),)

    return make_op(x**p, (a,), bw, "pow")


def abs(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.abs(x), (a,), lambda g: (g * np.sign(x),), "abs")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return make_op(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise FloatingPointError("log of non-positive value")
    return make_op(np.log(x), (a,), lambda g: (g / x,), "log")


def sqrt(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x < 0):
        raise FloatingPointError("sqrt of negative value")
    y = np.sqrt(x)
    return make_op(y, (a,), lambda g: (g * 0.5 / y,), "sqrt")


def sin(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.sin(x), (a,), lambda g: (g * np.cos(x),), "sin")


def cos(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.cos(x), (a,), lambda g: (-g * np.sin(x),), "cos")


def clamp(a: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    x = a.data
    lo_ = -np.inf if lo is None else lo
    hi_ = np.inf if hi is None else hi
    keep = (x >= lo_) & (x <= hi_)
    return make_op(np.clip(x, lo_, hi_), (a,), lambda g: (g * keep,), "clamp")


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.maximum(x, 0), (a,), lambda g: (g * (x > 0),), "relu")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    x = a.data
    return make_op(np.where(x > 0, x, slope * x), (a,), lambda g: (g * np.where(x > 0, 1.0, slope),), "leaky_relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return make_op(y, (a,), lambda g: (g * y * (1 - y),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    x = a.data
    y = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0)

    def bw(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return make_op(y, (a,), bw, "softplus")


def gelu(a: Tensor) -> Tensor:
    """tanh approximation."""
    x = a.data
    c = math.sqrt(2.0 / math.pi)
    inner = c * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    y = 0.5 * x * (1 + t)

    def bw(g):
        dinner = c * (1 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1 + t) + 0.5 * x * (1 - t**2) * dinner),)

    return make_op(y, (a,), bw, "gelu")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op(y, (a,), bw, "softmax")


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)
    y = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_op(np.asarray(y), (a,), bw, "sum")


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(reduce_sum(a, axes, keepdims), 1.0 / n)


def reduce_min(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    x = a.data
    axis = axis % x.ndim
    idx = np.expand_dims(np.argmin(x, axis=axis), axis)
    y = np.take_along_axis(x, idx, axis=axis)

    def bw(g):
        out = np.zeros_like(x)
        gg = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(out, idx, gg, axis=axis)
        return (out,)

    return make_op(y if keepdims else np.squeeze(y, axis), (a,), bw, "min")


def reduce_max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    return neg(reduce_min(neg(a), axis, keepdims))


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    y = a.data.reshape(shape)
    return make_op(y, (a,), lambda g: (g.reshape(old),), "reshape")


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_op(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "permute")


def transpose_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return permute(a, axes)


def expand(a: Tensor, shape) -> Tensor:
    """Explicit broadcast of size-1 axes (right-aligned) to ``shape``."""
    shape = tuple(shape)
    src = a.shape
    try:
        y = np.broadcast_to(a.data, shape)
    except ValueError as e:
        raise ShapeError(f"expand: cannot broadcast {src} to {shape}") from e
    return make_op(np.ascontiguousarray(y), (a,), lambda g: (_unbroadcast(g, src),), "expand")


def slice(a: Tensor, idx) -> Tensor:
    if not isinstance(idx, tuple):
        idx = (idx,)
    for i in idx:
        if not (isinstance(i, (int, np.integer, type(None))) or i is Ellipsis or isinstance(i, builtins.slice)):
            raise TypeError("slice supports basic indexing only")
    shape, dtype = a.shape, a.dtype
    y = a.data[idx]

    def bw(g):
        out = np.zeros(shape, dtype=dtype)
        out[idx] = g
        return (out,)

    return make_op(np.array(y), (a,), bw, "slice")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of empty list")
    nd = tensors[0].ndim
    axis = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != axis):
            raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    y = np.concatenate([t.data for t in tensors], axis=axis)

    def bw(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [builtins.slice(None)] * nd
            sl[axis] = np.s_[lo:hi]
            out.append(g[tuple(sl)])
        return tuple(out)

    return make_op(y, tuple(tensors), bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    nd = tensors[0].ndim + 1
    axis = axis % nd
    parts = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(parts, axis=axis)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ {a.shape} @ {b.shape}")
    if a.ndim == 2 and b.ndim > 2:
        raise ShapeError("matmul: left operand must carry the batch dims")
    ad, bd = a.data, b.data

    def bw(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(ad, -1, -2), g)
            if b.ndim == 2 and gb.ndim > 2:
                gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return make_op(np.matmul(ad, bd), (a, b), bw, "matmul")


# ---------------------------------------------------------------------------
# convolution family (N, C, H, W)


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    return as_strided(xp, (n, c, kh, kw, ho, wo), (s0, s1, s2, s3, s2 * stride, s3 * stride), writeable=False)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {ci}")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({o},)")
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    ho = (h + 2 * p - kh) // stride + 1
    wo = (wd + 2 * p - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd}")
    cols = _windows(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
    wd_ = w.data
    y = np.tensordot(wd_, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
    if b is not None:
        y = y + b.data.reshape(1, o, 1, 1)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gx = gw = gb = None
        if w.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        if x.requires_grad:
            dcols = np.tensordot(wd_, g, axes=([0], [1]))  # (C, kh, kw, N, ho, wo)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j].transpose(1, 0, 2, 3)
            gx = gxp[:, :, p : p + h, p : p + wd] if p else gxp
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    return make_op(np.ascontiguousarray(y), parents, bw, "conv2d")


def conv_transpose2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Weight layout (C_in, C_out, kh, kw); output extent (H-1)*stride - 2*padding + kh."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv_transpose2d expects 4-d input and weight")
    n, c, h, wd = x.shape
    ci, o, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv_transpose2d: input has {c} channels, weight expects {ci}")
    p = padding
    hf = (h - 1) * stride + kh
    wf = (wd - 1) * stride + kw
    if hf - 2 * p <= 0 or wf - 2 * p <= 0:
        raise ShapeError("conv_transpose2d: padding consumes output")
    wd_ = w.data
    cols = np.tensordot(wd_, x.data, axes=([0], [1]))  # (O, kh, kw, N, H, W)
    full = np.zeros((n, o, hf, wf), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            full[:, :, i : i + stride * h : stride, j : j + stride * wd : stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    y = full[:, :, p : hf - p, p : wf - p] if p else full
    if b is not None:
        y = y + b.data.reshape(1, o, 1, 1)
    parents = (x, w) if b is None else (x, w, b)
    xd = x.data

    def bw(g):
        gfull = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = _windows(np.ascontiguousarray(gfull), kh, kw, stride, h, wd)  # (N, O, kh, kw, H, W)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.tensordot(wd_, gcols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
        if w.requires_grad:
            gw = np.tensordot(xd, gcols, axes=([0, 2, 3], [0, 4, 5]))
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    return make_op(np.ascontiguousarray(y), parents, bw, "conv_transpose2d")


def _pad_matrix(n: int, p: int, mode: str, dtype) -> np.ndarray:
    m = np.zeros((n + 2 * p, n), dtype=dtype)
    for r in range(n + 2 * p):
        src = r - p
        if mode == "edge":
            m[r, min(max(src, 0), n - 1)] = 1
        elif mode == "constant":
            if 0 <= src < n:
                m[r, src] = 1
        else:
            raise ValueError(f"unknown pad mode {mode}")
    return m


def pad2d(x: Tensor, p: int, mode: str = "edge") -> Tensor:
    """Pad the last two axes by ``p`` on every side (edge or zero)."""
    if p == 0:
        return x
    h, w = x.shape[-2:]
    mh = _pad_matrix(h, p, mode, x.dtype)
    mw = _pad_matrix(w, p, mode, x.dtype)
    y = np.matmul(np.matmul(mh, x.data), mw.T)
    return make_op(y, (x,), lambda g: (np.matmul(np.matmul(mh.T, g), mw),), f"pad_{mode}")


def avg_pool2d(x: Tensor, kernel: int, stride: Optional[int] = None) -> Tensor:
    """Mean pooling over the last two axes, no implicit padding."""
    stride = stride or kernel
    xd = np.ascontiguousarray(x.data)
    lead = xd.shape[:-2]
    h, w = xd.shape[-2:]
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError("avg_pool2d: kernel larger than input")
    y = np.zeros(lead + (ho, wo), dtype=xd.dtype)
    for i in range(kernel):
        for j in range(kernel):
            y += xd[..., i : i + stride * ho : stride, j : j + stride * wo : stride]
    y /= kernel * kernel

    def bw(g):
        gx = np.zeros_like(xd)
        gs = g / (kernel * kernel)
        for i in range(kernel):
            for j in range(kernel):
                gx[..., i : i + stride * ho : stride, j : j + stride * wo : stride] += gs
        return (gx,)

    return make_op(y, (x,), bw, "avg_pool2d")


def _interp_matrix(n_out: int, n_in: int, align_corners: bool, dtype) -> np.ndarray:
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        m[:, 0] = 1
        return m
    for i in range(n_out):
        if align_corners:
            src = 0.0 if n_out == 1 else i * (n_in - 1) / (n_out - 1)
        else:
            src = (i + 0.5) * n_in / n_out - 0.5
            src = min(max(src, 0.0), n_in - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        f = src - lo
        m[i, lo] += 1 - f
        m[i, hi] += f
    return m


def resize_bilinear(x: Tensor, size: tuple, align_corners: bool = False) -> Tensor:
    """Bilinear resize of the last two axes to ``size`` = (H_out, W_out)."""
    h, w = x.shape[-2:]
    ho, wo = size
    if (ho, wo) == (h, w):
        return x
    ah = _interp_matrix(ho, h, align_corners, x.dtype)
    aw = _interp_matrix(wo, w, align_corners, x.dtype)
    y = np.matmul(np.matmul(ah, x.data), aw.T)
    return make_op(y, (x,), lambda g: (np.matmul(np.matmul(ah.T, g), aw),), "resize_bilinear")


def bilinear_upsample(x: Tensor, factor: int = 2, align_corners: bool = False) -> Tensor:
    h, w = x.shape[-2:]
    return resize_bilinear(x, (h * factor, w * factor), align_corners)


# ---------------------------------------------------------------------------
# normalisation


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis then apply the per-feature affine map."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd, bd = gamma.data, beta.data
    y = xhat * gd + bd
    d = xd.shape[-1]

    def bw(g):
        gxhat = g * gd
        gx = inv / d * (d * gxhat - gxhat.sum(-1, keepdims=True) - xhat * (gxhat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_op(y, (x, gamma, beta), bw, "layer_norm")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalisation of (N, C, H, W); updates running stats in place when training."""
    if x.ndim != 4:
        raise ShapeError("batch_norm expects (N, C, H, W)")
    xd = x.data
    c = xd.shape[1]
    gd = gamma.data.reshape(1, c, 1, 1)
    bd = beta.data.reshape(1, c, 1, 1)
    m = xd.shape[0] * xd.shape[2] * xd.shape[3]
    if training:
        mu = xd.mean(axis=(0, 2, 3), keepdims=True)
        xc = xd - mu
        var = (xc**2).mean(axis=(0, 2, 3), keepdims=True)
        running_mean *= 1 - momentum
        running_mean += momentum * mu.reshape(c)
        unbiased = var.reshape(c) * (m / max(m - 1, 1))
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.reshape(1, c, 1, 1).astype(xd.dtype)
        xc = xd - mu
        var = running_var.reshape(1, c, 1, 1).astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gd + bd

    def bw(g):
        gxhat = g * gd
        if training:
            gx = inv / m * (
                m * gxhat - gxhat.sum(axis=(0, 2, 3), keepdims=True) - xhat * (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
        else:
            gx = gxhat * inv
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_op(y, (x, gamma, beta), bw, "batch_norm")


def custom_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn, name: str) -> Tensor:
    """Extension point for primitives defined outside this module."""
    return make_op(data, tuple(parents), backward_fn, name)
