"""Gradient-check registrations for every differentiable op.

Each factory builds random inputs (and any parameters) for the requested
shapes and returns ``(inputs, fn)``; every tensor in ``inputs`` is checked.
Scores fed to the soft-argmax are scaled by the temperature so its softmax
stays out of saturation, where the gradient carries no signal.
"""

from __future__ import annotations

import numpy as np

from . import correlation, match, tam
from .block import TcmConfig, init_tcm_params, tcm_forward
from .match import MatchConfig
from .tensors import Tensor
from .tensors import ops as P
from .tensors.gradcheck import register


def _t(rng, shape, dt, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, dtype=dt)


def _pos(rng, shape, dt):
    return Tensor(rng.uniform(0.5, 1.5, size=shape), dtype=dt)


@register("conv_pointwise", [(2, 2, 3, 3)])
def _conv_pointwise(shapes, rng, dt):
    (x,) = shapes
    ins = {"x": _t(rng, x, dt), "weights": _t(rng, (3, x[0]), dt), "bias": _t(rng, (3,), dt)}
    return ins, lambda d: P.conv_pointwise(d["x"], d["weights"], d["bias"])


@register("conv_depthwise_2d", [(2, 2, 4, 4)])
def _conv_depthwise(shapes, rng, dt):
    (x,) = shapes
    ins = {"x": _t(rng, x, dt), "kernels": _t(rng, (x[0], 3, 3), dt)}
    return ins, lambda d: P.conv_depthwise_2d(d["x"], d["kernels"])


@register("conv_temporal", [(2, 4, 3, 3)])
def _conv_temporal(shapes, rng, dt):
    (x,) = shapes
    ins = {"x": _t(rng, x, dt), "kernels": _t(rng, (x[0], 3), dt)}
    return ins, lambda d: P.conv_temporal(d["x"], d["kernels"])


@register("avg_pool2d", [(2, 2, 4, 4)])
def _avg_pool(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.avg_pool2d(d["x"], 2)


@register("sigmoid", [(8,)])
def _sigmoid(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt, 2.0)}, lambda d: P.sigmoid(d["x"])


@register("relu", [(2, 3, 3, 3)])
def _relu(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.relu(d["x"])


@register("add", [(2, 3, 2, 2)])
def _add(shapes, rng, dt):
    s = shapes[0]
    return {"a": _t(rng, s, dt), "b": _t(rng, s, dt)}, lambda d: P.add(d["a"], d["b"])


@register("mul", [(2, 3, 2, 2)])
def _mul(shapes, rng, dt):
    s = shapes[0]
    return {"a": _t(rng, s, dt), "b": _t(rng, s, dt)}, lambda d: P.mul(d["a"], d["b"])


@register("mul_broadcast_time", [(2, 4, 3, 3)])
def _mul_time(shapes, rng, dt):
    s = shapes[0]
    ins = {"x": _t(rng, s, dt), "w": _t(rng, (s[1],), dt)}
    return ins, lambda d: P.mul_broadcast_time(d["x"], d["w"])


@register("gap_spatial", [(2, 3, 4, 4)])
def _gap(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.gap_spatial(d["x"])


@register("mean", [(2, 3, 4, 4)])
def _mean(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.mean(d["x"], (1, 2, 3))


@register("order_invariant_mean", [(3, 5)])
def _oimean(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.order_invariant_mean(d["x"], axis=1)


@register("l2_normalize", [(4, 2, 3, 3)])
def _l2n(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.l2_normalize(d["x"], axis=0)


@register("softmax_last", [(3, 5)])
def _softmax(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.softmax_last(d["x"])


@register("linear", [(6,)])
def _linear(shapes, rng, dt):
    (x,) = shapes
    ins = {"x": _t(rng, x, dt), "weights": _t(rng, (3, x[0]), dt), "bias": _t(rng, (3,), dt)}
    return ins, lambda d: P.linear(d["x"], d["weights"], d["bias"])


@register("cross_entropy", [(4,)])
def _xent(shapes, rng, dt):
    return {"logits": _t(rng, shapes[0], dt)}, lambda d: P.cross_entropy(d["logits"], 1)


@register("concat", [(2, 3, 2), (1, 3, 2)])
def _concat(shapes, rng, dt):
    ins = {f"x{i}": _t(rng, s, dt) for i, s in enumerate(shapes)}
    return ins, lambda d: P.concat(list(d.values()), axis=0)


@register("take", [(4, 3)])
def _take(shapes, rng, dt):
    n = shapes[0][0]
    idx = list(range(n)) + [n - 1]
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.take(d["x"], idx, axis=0)


@register("transpose", [(2, 3, 4)])
def _transpose(shapes, rng, dt):
    return {"x": _t(rng, shapes[0], dt)}, lambda d: P.transpose(d["x"], (2, 0, 1))


@register("correlate", [(3, 5, 5)])
def _correlate(shapes, rng, dt):
    s = shapes[0]
    ins = {"fa": _t(rng, s, dt), "fb": _t(rng, s, dt)}
    return ins, lambda d: correlation.correlate(d["fa"], d["fb"], 2)


@register("correlate_frames", [(2, 3, 4, 4)])
def _correlate_frames(shapes, rng, dt):
    s = shapes[0]
    ins = {"fa": _t(rng, s, dt), "fb": _t(rng, s, dt)}
    return ins, lambda d: correlation.correlate_frames(d["fa"], d["fb"], 1)


@register("reduce_channels", [(8, 2, 3, 3)])
def _reduce(shapes, rng, dt):
    (x,) = shapes
    ins = {"x": _t(rng, x, dt), "weights": _t(rng, (2, x[0]), dt), "bias": _t(rng, (2,), dt)}
    return ins, lambda d: correlation.reduce_channels(d["x"], d["weights"], d["bias"])


@register("kernel_soft_argmax", [(25,)])
def _ksa(shapes, rng, dt):
    cfg = MatchConfig()
    return {"scores": _t(rng, shapes[0], dt, 2 * cfg.tau)}, lambda d: match.kernel_soft_argmax(d["scores"], cfg)


@register("soft_argmax_volume", [(2, 9, 3, 3)])
def _sav(shapes, rng, dt):
    cfg = MatchConfig()
    return {"scores": _t(rng, shapes[0], dt, 2 * cfg.tau)}, lambda d: match.soft_argmax_volume(d["scores"], cfg)


@register("confidence_volume", [(2, 9, 3, 3)])
def _conf(shapes, rng, dt):
    return {"scores": _t(rng, shapes[0], dt)}, lambda d: match.confidence_volume(d["scores"])


@register("estimate_displacements", [(3, 9, 3, 3), (3, 9, 3, 3)])
def _estimate(shapes, rng, dt):
    cfg = MatchConfig()
    ins = {"fast": _t(rng, shapes[0], dt, 2 * cfg.tau), "slow": _t(rng, shapes[1], dt, 2 * cfg.tau)}

    def fn(d):
        fast = correlation.CorrelationVolume(d["fast"], 1, "fast")
        slow = correlation.CorrelationVolume(d["slow"], 1, "slow")
        return match.estimate_displacements(fast, slow, cfg).maps

    return ins, fn


@register("transform_displacements", [(6, 2, 4, 4)])
def _transform(shapes, rng, dt):
    (x,) = shapes
    params = tam.init_tam_params(x[1], c_mid=3, rng=rng, dtype=dt)
    named = params.named()
    named.pop("attn.weight")
    for v in named.values():
        v.data += rng.standard_normal(v.shape) * 0.1
    ins = {"d": _t(rng, x, dt), **named}

    def fn(d):
        p = tam.TamParams.from_named({**d, "attn.weight": params.attention})
        return tam.transform_displacements(d["d"], p)

    return ins, fn


@register("attention_conv1d", [(7,)])
def _aconv(shapes, rng, dt):
    ins = {"a": _t(rng, shapes[0], dt), "weights": _t(rng, (3,), dt)}
    return ins, lambda d: tam.attention_conv1d(d["a"], d["weights"])


@register("attention_band", [(6,)])
def _aband(shapes, rng, dt):
    T = shapes[0][0]
    ins = {"a": _t(rng, (T,), dt), "weights": _t(rng, (T, 3), dt)}
    return ins, lambda d: tam.attention_band(d["a"], d["weights"])


@register("attention_full", [(5,)])
def _afull(shapes, rng, dt):
    T = shapes[0][0]
    ins = {"a": _t(rng, (T,), dt), "weights": _t(rng, (T, T), dt)}
    return ins, lambda d: tam.attention_full(d["a"], d["weights"])


@register("temporal_attention", [(3, 5, 3, 3)])
def _tattn(shapes, rng, dt):
    (f,) = shapes
    ins = {"f": _t(rng, f, dt), "attn": _t(rng, (3,), dt)}
    return ins, lambda d: tam.temporal_attention(d["f"], d["attn"])


@register("apply_attention", [(2, 4, 3, 3)])
def _apply(shapes, rng, dt):
    (f,) = shapes
    ins = {"f": _t(rng, f, dt), "w": _pos(rng, (f[1],), dt)}
    return ins, lambda d: tam.apply_attention(d["f"], d["w"])


@register("tam_end_to_end", [(6, 3, 4, 4)])
def _tam_e2e(shapes, rng, dt):
    (x,) = shapes
    params = tam.init_tam_params(x[1], c_mid=3, rng=rng, dtype=dt)
    named = params.named()
    for v in named.values():
        v.data += rng.standard_normal(v.shape) * 0.1
    ins = {"d": _t(rng, x, dt), **named}

    def fn(d):
        p = tam.TamParams.from_named(d)
        f = tam.transform_displacements(d["d"], p)
        return tam.apply_attention(f, tam.temporal_attention(f, p.attention))

    return ins, fn


@register("tcm_forward", [(4, 3, 5, 5)])
def _tcm(shapes, rng, dt):
    (x,) = shapes
    C, T, H, W = x
    cfg = TcmConfig(channels=C, frames=T, c_mid=4)
    params = init_tcm_params(cfg, rng=rng, dtype=dt)
    named = params.named()
    for v in named.values():
        v.data += rng.standard_normal(v.shape) * 0.1
    ins = {"x": _t(rng, x, dt), **named}

    def fn(d):
        p = type(params).from_named(cfg, d)
        return tcm_forward(d["x"], p)

    return ins, fn
