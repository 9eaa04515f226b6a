"""Channel reduction and local correlation volumes between frame pairs.

The window axis enumerates displacements ``p = (dy, dx)`` in ``[-R, R]^2``
row-major (dy outer, dx inner), so it has ``(2R + 1)^2`` entries. Targets
outside the frame contribute zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .sampling import PairSpec
from .tensors import Tensor, conv_pointwise, record, take


def window_size(R: int) -> int:
    return (2 * R + 1) ** 2


def window_offsets(R: int) -> np.ndarray:
    """Array of shape [(2R+1)^2, 2] holding (dy, dx) in enumeration order."""
    r = np.arange(-R, R + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    return np.stack([dy.ravel(), dx.ravel()], axis=1)


def offset_index(dy: int, dx: int, R: int) -> int:
    return (dy + R) * (2 * R + 1) + (dx + R)


def default_radius(H: int, cap: Optional[int] = None) -> int:
    """Ceiling of H/2, optionally capped."""
    R = math.ceil(H / 2)
    return R if cap is None else min(R, cap)


def default_reduced_channels(C: int) -> int:
    return min(C, max(C // 4, 8))


@dataclass(frozen=True)
class CorrConfig:
    radius: Optional[int] = None
    reduced_channels: int = 8

    def __post_init__(self):
        if self.radius is not None and self.radius < 0:
            raise ConfigurationError(f"radius must be >= 0, got {self.radius}")
        if self.reduced_channels < 1:
            raise ConfigurationError("reduced_channels must be >= 1")


@dataclass
class CorrelationVolume:
    scores: Tensor  # [T-1, (2R+1)^2, H, W]
    radius: int
    pair_kind: str

    @property
    def shape(self) -> tuple:
        return self.scores.shape


def reduce_channels(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """1x1 convolution down to ``weights.shape[0]`` channels."""
    return conv_pointwise(x, weights, bias)


def _corr_arrays(a: np.ndarray, b: np.ndarray, R: int) -> Tuple[np.ndarray, np.ndarray]:
    # a, b: [C, N, H, W] -> scores [N, K, H, W]; also returns padded b for backward
    c, n, h, w = a.shape
    bp = np.pad(b, ((0, 0), (0, 0), (R, R), (R, R)))
    out = np.empty((n, window_size(R), h, w), dtype=a.dtype)
    for idx, (dy, dx) in enumerate(window_offsets(R)):
        shifted = bp[:, :, R + dy:R + dy + h, R + dx:R + dx + w]
        out[:, idx] = np.einsum("cnhw,cnhw->nhw", a, shifted)
    return out, bp


def _corr_backward(g: np.ndarray, a: np.ndarray, bp: np.ndarray, R: int):
    c, n, h, w = a.shape
    ga = np.zeros_like(a)
    gbp = np.zeros_like(bp)
    for idx, (dy, dx) in enumerate(window_offsets(R)):
        gi = g[:, idx][None]
        ga += gi * bp[:, :, R + dy:R + dy + h, R + dx:R + dx + w]
        gbp[:, :, R + dy:R + dy + h, R + dx:R + dx + w] += gi * a
    return ga, gbp[:, :, R:R + h, R:R + w]


def correlate_frames(fa: Tensor, fb: Tensor, R: int) -> Tensor:
    """Batched correlation of frame stacks [C, N, H, W] -> [N, (2R+1)^2, H, W]."""
    if fa.shape != fb.shape:
        raise DimensionError(f"correlate: shape mismatch {fa.shape} vs {fb.shape}")
    if fa.ndim != 4:
        raise DimensionError(f"correlate_frames expects [C, N, H, W], got {fa.shape}")
    if R < 0:
        raise ConfigurationError(f"radius must be >= 0, got {R}")
    out, bp = _corr_arrays(fa.data, fb.data, R)
    a = fa.data

    def backward(g):
        return _corr_backward(g, a, bp, R)

    return record(out, (fa, fb), backward)


def correlate(fa: Tensor, fb: Tensor, R: int) -> Tensor:
    """Local correlation of two [C, H, W] maps -> [(2R+1)^2, H, W]."""
    if fa.shape != fb.shape:
        raise DimensionError(f"correlate: shape mismatch {fa.shape} vs {fb.shape}")
    if fa.ndim != 3:
        raise DimensionError(f"correlate expects [C, H, W], got {fa.shape}")
    if R < 0:
        raise ConfigurationError(f"radius must be >= 0, got {R}")
    a = fa.data[:, None]
    out, bp = _corr_arrays(a, fb.data[:, None], R)

    def backward(g):
        ga, gb = _corr_backward(g[None], a, bp, R)
        return ga[:, 0], gb[:, 0]

    return record(out[0], (fa, fb), backward)


def correlate_oracle(fa, fb, R: int) -> np.ndarray:
    """Literal nested-loop evaluation, kept free of any vectorisation."""
    a = np.asarray(fa.data if isinstance(fa, Tensor) else fa)
    b = np.asarray(fb.data if isinstance(fb, Tensor) else fb)
    if a.shape != b.shape:
        raise DimensionError(f"correlate: shape mismatch {a.shape} vs {b.shape}")
    C, H, W = a.shape
    side = 2 * R + 1
    out = np.zeros((side * side, H, W), dtype=np.float64)
    for i in range(H):
        for j in range(W):
            for k in range(i - R, i + R + 1):
                for l in range(j - R, j + R + 1):
                    if not (0 <= k < H and 0 <= l < W):
                        continue
                    acc = 0.0
                    for h in range(C):
                        acc += float(a[h, i, j]) * float(b[h, k, l])
                    out[(k - i + R) * side + (l - j + R), i, j] = acc
    return out.astype(a.dtype)


def correlate_pairs(feats: Tensor, pairs: PairSpec, R: int) -> Tuple[CorrelationVolume, CorrelationVolume]:
    """Fast and slow correlation volumes for a [C, T, H, W] feature clip."""
    if feats.ndim != 4:
        raise DimensionError(f"correlate_pairs expects [C, T, H, W], got {feats.shape}")
    if pairs.T != feats.shape[1]:
        raise DimensionError(f"pair schedule built for T={pairs.T}, features have T={feats.shape[1]}")
    volumes = []
    for kind, plist in (("fast", pairs.fast), ("slow", pairs.slow)):
        src = take(feats, [p[0] for p in plist], axis=1)
        dst = take(feats, [p[1] for p in plist], axis=1)
        volumes.append(CorrelationVolume(correlate_frames(src, dst, R), R, kind))
    return volumes[0], volumes[1]


def correlation_flops(T: int, C: int, H: int, W: int, R: int) -> int:
    """``(T-1) * C * H * W * R^2`` for one pair schedule, as an exact Python int."""
    for name, v in (("T", T), ("C", C), ("H", H), ("W", W)):
        if v < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {v}")
    if R < 0:
        raise ConfigurationError(f"radius must be >= 0, got {R}")
    return (int(T) - 1) * int(C) * int(H) * int(W) * int(R) ** 2
