"""Differentiable primitives over ``Tensor``.

Feature maps use the fixed layout (C, T, H, W). Spatial convolutions are
cross-correlations with zero padding that preserves H and W.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, DimensionError
from .tensor import Tensor, record


def _check_rank(x: Tensor, rank: int, what: str) -> None:
    if x.ndim != rank:
        raise DimensionError(f"{what} expects a rank-{rank} tensor, got shape {x.shape}")


def _same_dtype(*ts: Tensor) -> np.dtype:
    dt = ts[0].dtype
    for t in ts[1:]:
        if t is not None and t.dtype != dt:
            raise TypeError(f"dtype mismatch: {dt} vs {t.dtype}")
    return dt


def conv_pointwise(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """1x1 convolution: ``out[o] = sum_c weights[o, c] * x[c] + bias[o]``."""
    _check_rank(x, 4, "conv_pointwise")
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise DimensionError(
            f"conv_pointwise: weights shape {weights.shape} incompatible with input shape {x.shape}"
        )
    if bias is not None and bias.shape != (weights.shape[0],):
        raise DimensionError(f"conv_pointwise: bias shape {bias.shape} != ({weights.shape[0]},)")
    dt = _same_dtype(x, weights, bias)
    xd, wd = x.data, weights.data
    c, t, h, w = xd.shape
    flat = xd.reshape(c, -1)
    out = wd @ flat
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(wd.shape[0], t, h, w).astype(dt, copy=False)

    def backward(g):
        g2 = g.reshape(g.shape[0], -1)
        gx = (wd.T @ g2).reshape(xd.shape)
        gw = g2 @ flat.T
        gb = g2.sum(axis=1) if bias is not None else None
        return gx, gw, gb

    inputs = (x, weights) if bias is None else (x, weights, bias)
    return record(out, inputs, backward)


def _check_kernel(kh: int, kw: int) -> None:
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigurationError(f"depthwise kernel extents must be odd, got {kh}x{kw}")


def conv_depthwise_2d(x: Tensor, kernels: Tensor) -> Tensor:
    """Per-channel 1 x kh x kw convolution, applied to every frame independently."""
    _check_rank(x, 4, "conv_depthwise_2d")
    if kernels.ndim != 3 or kernels.shape[0] != x.shape[0]:
        raise DimensionError(
            f"conv_depthwise_2d: kernels shape {kernels.shape} incompatible with input shape {x.shape}"
        )
    kh, kw = kernels.shape[1:]
    _check_kernel(kh, kw)
    dt = _same_dtype(x, kernels)
    xd, kd = x.data, kernels.data
    c, t, h, w = xd.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros_like(xd)
    for i in range(kh):
        for j in range(kw):
            out += kd[:, i, j, None, None, None] * xp[:, :, i:i + h, j:j + w]

    def backward(g):
        gxp = np.zeros_like(xp)
        gk = np.empty_like(kd)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + h, j:j + w] += kd[:, i, j, None, None, None] * g
                gk[:, i, j] = np.einsum("cthw,cthw->c", g, xp[:, :, i:i + h, j:j + w])
        return gxp[:, :, ph:ph + h, pw:pw + w], gk

    return record(out.astype(dt, copy=False), (x, kernels), backward)


def conv_temporal(x: Tensor, kernels: Tensor) -> Tensor:
    """Per-channel kt x 1 x 1 convolution along time, zero padded to keep T."""
    _check_rank(x, 4, "conv_temporal")
    if kernels.ndim != 2 or kernels.shape[0] != x.shape[0]:
        raise DimensionError(f"conv_temporal: kernels shape {kernels.shape} incompatible with {x.shape}")
    kt = kernels.shape[1]
    if kt % 2 == 0:
        raise ConfigurationError(f"temporal kernel extent must be odd, got {kt}")
    dt = _same_dtype(x, kernels)
    xd, kd = x.data, kernels.data
    t = xd.shape[1]
    p = (kt - 1) // 2
    xp = np.pad(xd, ((0, 0), (p, p), (0, 0), (0, 0)))
    out = np.zeros_like(xd)
    for j in range(kt):
        out += kd[:, j, None, None, None] * xp[:, j:j + t]

    def backward(g):
        gxp = np.zeros_like(xp)
        gk = np.empty_like(kd)
        for j in range(kt):
            gxp[:, j:j + t] += kd[:, j, None, None, None] * g
            gk[:, j] = np.einsum("cthw,cthw->c", g, xp[:, j:j + t])
        return gxp[:, p:p + t], gk

    return record(out.astype(dt, copy=False), (x, kernels), backward)


def avg_pool2d(x: Tensor, factor: int = 2) -> Tensor:
    """Non-overlapping spatial average pooling; H and W must divide by ``factor``."""
    _check_rank(x, 4, "avg_pool2d")
    c, t, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError(f"avg_pool2d: spatial extents {h}x{w} not divisible by {factor}")
    ho, wo = h // factor, w // factor
    out = x.data.reshape(c, t, ho, factor, wo, factor).mean(axis=(3, 5))

    def backward(g):
        gx = np.repeat(np.repeat(g, factor, axis=2), factor, axis=3) / (factor * factor)
        return (gx.astype(g.dtype, copy=False),)

    return record(out.astype(x.dtype, copy=False), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(xd))
    out = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)

    def backward(g):
        return (g * out * (1.0 - out),)

    return record(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)

    def backward(g):
        return (g * mask,)

    return record(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")
    _same_dtype(a, b)

    def backward(g):
        return g, g

    return record(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    _same_dtype(a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return g * bd, g * ad

    return record(ad * bd, (a, b), backward)


def scale(x: Tensor, alpha: float) -> Tensor:
    def backward(g):
        return (g * alpha,)

    return record((x.data * alpha).astype(x.dtype, copy=False), (x,), backward)


def mul_broadcast_time(x: Tensor, w: Tensor) -> Tensor:
    """``out[c, t, h, w] = x[c, t, h, w] * w[t]``."""
    _check_rank(x, 4, "mul_broadcast_time")
    if w.shape != (x.shape[1],):
        raise DimensionError(f"mul_broadcast_time: weights shape {w.shape} vs temporal extent of {x.shape}")
    _same_dtype(x, w)
    xd, wd = x.data, w.data
    out = xd * wd[None, :, None, None]

    def backward(g):
        return g * wd[None, :, None, None], np.einsum("cthw,cthw->t", g, xd)

    return record(out, (x, w), backward)


def gap_spatial(x: Tensor) -> Tensor:
    """Mean over H and W: [C, T, H, W] -> [C, T]."""
    _check_rank(x, 4, "gap_spatial")
    c, t, h, w = x.shape
    out = x.data.sum(axis=(2, 3)) / (h * w)

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(x.dtype),)

    return record(out.astype(x.dtype, copy=False), (x,), backward)


def l2_normalize(x: Tensor, axis: int = 0, eps: float = 1e-6) -> Tensor:
    """Scale every fibre along ``axis`` to unit length: x / sqrt(sum x^2 + eps)."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True) + eps)
    out = x.data / norm

    def backward(g):
        dot = (g * x.data).sum(axis=axis, keepdims=True)
        return ((g / norm - x.data * dot / norm ** 3).astype(x.dtype),)

    return record(out.astype(x.dtype, copy=False), (x,), backward)


def mean(x: Tensor, axes: Sequence[int]) -> Tensor:
    """Mean over ``axes`` (dropped from the result)."""
    axes = tuple(sorted(a % x.ndim for a in axes))
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.sum(axis=axes) / count

    def backward(g):
        ge = np.expand_dims(g, axes) / count
        return (np.broadcast_to(ge, x.shape).astype(x.dtype),)

    return record(np.asarray(out, dtype=x.dtype), (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        return (np.full(x.shape, g, dtype=x.dtype),)

    return record(np.asarray(x.data.sum(), dtype=x.dtype), (x,), backward)


def softmax_last(x: Tensor) -> Tensor:
    xd = x.data
    z = np.exp(xd - xd.max(axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return record(out.astype(x.dtype, copy=False), (x,), backward)


def linear(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Dense layer on a vector: [C] -> [K]."""
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise DimensionError(f"linear: weights shape {weights.shape} incompatible with input shape {x.shape}")
    xd, wd = x.data, weights.data
    out = wd @ xd
    if bias is not None:
        out = out + bias.data

    def backward(g):
        return wd.T @ g, np.outer(g, xd), (g if bias is not None else None)

    inputs = (x, weights) if bias is None else (x, weights, bias)
    return record(out.astype(x.dtype, copy=False), inputs, backward)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Softmax cross-entropy of a single logit vector against an integer label."""
    if logits.ndim != 1:
        raise DimensionError(f"cross_entropy expects a vector of logits, got {logits.shape}")
    z = logits.data - logits.data.max()
    logsum = np.log(np.exp(z).sum())
    loss = logsum - z[label]
    probs = np.exp(z - logsum)

    def backward(g):
        gl = probs.copy()
        gl[label] -= 1.0
        return (g * gl,)

    return record(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    _same_dtype(*tensors)
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return record(out, tensors, backward)


def take(x: Tensor, indices: Sequence[int], axis: int) -> Tensor:
    """Gather slices along ``axis``; repeated indices accumulate in backward."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= x.shape[axis]:
        raise DimensionError(f"take: indices out of range for axis {axis} of shape {x.shape}")
    out = np.take(x.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return record(np.ascontiguousarray(out), (x,), backward)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return record(np.ascontiguousarray(x.data.transpose(axes)), (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return record(x.data.reshape(tuple(shape)), (x,), backward)


def order_invariant_mean(x: Tensor, axis: int = -1) -> Tensor:
    """Mean along ``axis`` summed in sorted order, so permuting that axis is bit-exact."""
    axis = axis % x.ndim
    n = x.shape[axis]
    out = np.sort(x.data, axis=axis).sum(axis=axis) / n

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).astype(x.dtype),)

    return record(np.asarray(out, dtype=x.dtype), (x,), backward)
