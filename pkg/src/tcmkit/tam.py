"""Temporal attention over displacement features.

A six-block depthwise-separable stack turns the 6-channel displacement
tensor into tempo features; a 1D convolution over the per-frame aggregate
(shared weights, zero padded) followed by a sigmoid gives one weight per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .match import DisplacementTensor
from .tensors import (
    Tensor,
    conv_depthwise_2d,
    conv_pointwise,
    mean,
    mul_broadcast_time,
    record,
    relu,
    sigmoid,
)

ATTENTION_MODES = ("shared", "band", "full")
N_BLOCKS = 6
# blocks 1-2 are depthwise only; blocks 3-6 add a pointwise stage
POINTWISE_BLOCKS = (3, 4, 5, 6)


def kernel_size_for(T: int, gamma: float = 1, b: float = 1) -> int:
    """Nearest odd integer to ``(log2 T + b) / gamma``; ties go down; clamped to [1, T]."""
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    v = (math.log2(T) + b) / gamma
    lower = 2 * math.floor((v - 1) / 2) + 1
    upper = lower + 2
    k = upper if (upper - v) < (v - lower) else lower
    return int(min(max(k, 1), T))


def attention_param_count(T: int, k: int, mode: str = "shared") -> int:
    if mode == "shared":
        return k
    if mode == "band":
        return k * T
    if mode == "full":
        return T * T
    raise ConfigurationError(f"unknown attention mode {mode!r}")


def attention_shape(T: int, k: int, mode: str) -> Tuple[int, ...]:
    return {"shared": (k,), "band": (T, k), "full": (T, T)}[mode]


def _he_uniform(rng, shape, fan_in, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class TamParams:
    stem_weight: Tensor  # [C_mid, 6]
    stem_bias: Tensor  # [C_mid]
    depthwise: List[Tensor]  # 6 x [C_mid, 3, 3]
    pointwise: List[Tuple[Tensor, Tensor]]  # 4 x ([C_mid, C_mid], [C_mid])
    attention: Tensor  # shape depends on mode
    mode: str = "shared"

    @property
    def c_mid(self) -> int:
        return self.stem_weight.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.attention.shape[-1] if self.mode != "full" else self.attention.shape[0]

    def named(self, prefix: str = "") -> Dict[str, Tensor]:
        out = {f"{prefix}stem.weight": self.stem_weight, f"{prefix}stem.bias": self.stem_bias}
        for i, k in enumerate(self.depthwise, start=1):
            out[f"{prefix}dw{i}.kernel"] = k
        for i, (w, b) in zip(POINTWISE_BLOCKS, self.pointwise):
            out[f"{prefix}pw{i}.weight"] = w
            out[f"{prefix}pw{i}.bias"] = b
        out[f"{prefix}attn.weight"] = self.attention
        return out

    @classmethod
    def from_named(cls, named: Dict[str, Tensor], prefix: str = "", mode: str = "shared") -> "TamParams":
        return cls(
            stem_weight=named[f"{prefix}stem.weight"],
            stem_bias=named[f"{prefix}stem.bias"],
            depthwise=[named[f"{prefix}dw{i}.kernel"] for i in range(1, N_BLOCKS + 1)],
            pointwise=[(named[f"{prefix}pw{i}.weight"], named[f"{prefix}pw{i}.bias"]) for i in POINTWISE_BLOCKS],
            attention=named[f"{prefix}attn.weight"],
            mode=mode,
        )


def init_tam_params(T: int, c_mid: int = 64, rng=None, dtype=np.float32, mode: str = "shared",
                    k: Optional[int] = None) -> TamParams:
    """He-uniform convolution weights, zero biases, zero attention weights."""
    if mode not in ATTENTION_MODES:
        raise ConfigurationError(f"unknown attention mode {mode!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    k = kernel_size_for(T) if k is None else k
    if k % 2 == 0 or not 1 <= k <= T:
        raise ConfigurationError(f"attention kernel size must be odd and in [1, {T}], got {k}")
    stem_w = Tensor(_he_uniform(rng, (c_mid, 6), 6, dtype))
    stem_b = Tensor(np.zeros(c_mid, dtype))
    dws = [Tensor(_he_uniform(rng, (c_mid, 3, 3), 9, dtype)) for _ in range(N_BLOCKS)]
    pws = [
        (Tensor(_he_uniform(rng, (c_mid, c_mid), c_mid, dtype)), Tensor(np.zeros(c_mid, dtype)))
        for _ in POINTWISE_BLOCKS
    ]
    attn = Tensor(np.zeros(attention_shape(T, k, mode), dtype))
    return TamParams(stem_w, stem_b, dws, pws, attn, mode)


def transform_displacements(d, params: TamParams) -> Tensor:
    """Stem 6 -> C_mid, then six ReLU-terminated 1x3x3 depthwise blocks."""
    x = d.maps if isinstance(d, DisplacementTensor) else d
    if x.ndim != 4 or x.shape[0] != 6:
        raise DimensionError(f"transform expects a [6, T, H, W] displacement tensor, got {x.shape}")
    h = conv_pointwise(x, params.stem_weight, params.stem_bias)
    pw = dict(zip(POINTWISE_BLOCKS, params.pointwise))
    for i, kernel in enumerate(params.depthwise, start=1):
        h = conv_depthwise_2d(h, kernel)
        if i in pw:
            h = conv_pointwise(h, *pw[i])
        h = relu(h)
    return h


def temporal_aggregate(f: Tensor) -> Tensor:
    """Mean over channels and space: [C, T, H, W] -> [T]."""
    if f.ndim != 4:
        raise DimensionError(f"expected [C, T, H, W], got {f.shape}")
    return mean(f, (0, 2, 3))


def attention_conv1d(a: Tensor, weights: Tensor) -> Tensor:
    """Zero-padded 1D convolution of a length-T vector with one shared odd-length kernel."""
    k = weights.shape[0]
    if weights.ndim != 1 or k % 2 == 0:
        raise ConfigurationError(f"attention kernel must be a vector of odd length, got {weights.shape}")
    T = a.shape[0]
    p = (k - 1) // 2
    ap = np.pad(a.data, (p, p))
    wd = weights.data
    out = np.zeros(T, dtype=a.dtype)
    for j in range(k):
        out += wd[j] * ap[j:j + T]

    def backward(g):
        gap = np.zeros_like(ap)
        gw = np.empty_like(wd)
        for j in range(k):
            gap[j:j + T] += wd[j] * g
            gw[j] = g @ ap[j:j + T]
        return gap[p:p + T], gw

    return record(out, (a, weights), backward)


def attention_band(a: Tensor, weights: Tensor) -> Tensor:
    """Per-row band weights [T, k]: row i sees frames i-(k-1)/2 .. i+(k-1)/2."""
    T, k = weights.shape
    if a.shape != (T,) or k % 2 == 0:
        raise DimensionError(f"band weights {weights.shape} incompatible with aggregate {a.shape}")
    p = (k - 1) // 2
    ap = np.pad(a.data, (p, p))
    windows = np.stack([ap[j:j + T] for j in range(k)], axis=1)  # [T, k]
    wd = weights.data
    out = (wd * windows).sum(axis=1)

    def backward(g):
        gap = np.zeros_like(ap)
        for j in range(k):
            gap[j:j + T] += wd[:, j] * g
        return gap[p:p + T], g[:, None] * windows

    return record(out.astype(a.dtype, copy=False), (a, weights), backward)


def attention_full(a: Tensor, weights: Tensor) -> Tensor:
    T = a.shape[0]
    if weights.shape != (T, T):
        raise DimensionError(f"full attention weights {weights.shape} != ({T}, {T})")
    wd, ad = weights.data, a.data

    def backward(g):
        return wd.T @ g, np.outer(g, ad)

    return record(wd @ ad, (a, weights), backward)


def band_matrix(weights, T: int) -> np.ndarray:
    """Dense T x T matrix equivalent of the shared-weight zero-padded convolution."""
    w = np.asarray(weights.data if isinstance(weights, Tensor) else weights)
    k = w.shape[0]
    p = (k - 1) // 2
    M = np.zeros((T, T), dtype=w.dtype)
    for i in range(T):
        for j in range(k):
            col = i - p + j
            if 0 <= col < T:
                M[i, col] = w[j]
    return M


def attention_logits(f: Tensor, attn: Tensor, mode: str = "shared") -> Tensor:
    agg = temporal_aggregate(f)
    if mode == "shared":
        return attention_conv1d(agg, attn)
    if mode == "band":
        return attention_band(agg, attn)
    if mode == "full":
        return attention_full(agg, attn)
    raise ConfigurationError(f"unknown attention mode {mode!r}")


def temporal_attention(f: Tensor, attn: Tensor, k: Optional[int] = None, mode: str = "shared") -> Tensor:
    """Per-frame weights in (0, 1) of length T."""
    if mode == "shared":
        if k is not None and attn.shape != (k,):
            raise ConfigurationError(f"attention weights {attn.shape} do not match k={k}")
        if attn.shape[0] % 2 == 0:
            raise ConfigurationError(f"attention kernel size must be odd, got {attn.shape[0]}")
        if attn.shape[0] > f.shape[1]:
            raise ConfigurationError(f"attention kernel size {attn.shape[0]} exceeds T={f.shape[1]}")
    return sigmoid(attention_logits(f, attn, mode))


def apply_attention(f: Tensor, w: Tensor) -> Tensor:
    if w.shape != (f.shape[1],):
        raise DimensionError(f"attention length {w.shape} does not match temporal extent of {f.shape}")
    return mul_broadcast_time(f, w)
