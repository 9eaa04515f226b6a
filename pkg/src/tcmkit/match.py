"""Kernel-soft-argmax displacement estimation and confidence pooling.

Scores are reweighted by a Gaussian centred on the hard argmax before a
temperature softmax; the displacement is the softmax-weighted mean offset.
The Gaussian is ``exp(-|p - p*|^2 / sigma^2) / (sqrt(2 pi) sigma)``; its
prefactor is kept, so the effective temperature is ``tau * sqrt(2 pi) * sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .correlation import CorrelationVolume, window_offsets
from .errors import ConfigurationError, DimensionError, EvaluationError
from .tensors import Tensor, concat, record, reshape, take, transpose


@dataclass(frozen=True)
class MatchConfig:
    sigma: float = 5.0
    tau: float = 0.01
    # test hook: replace the Gaussian by its constant prefactor
    uniform_kernel: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")


@dataclass
class DisplacementTensor:
    """Channels: fast dx, fast dy, fast conf, slow dx, slow dy, slow conf."""

    maps: Tensor  # [6, T, H, W]
    radius: int

    CHANNELS = ("fast_dx", "fast_dy", "fast_conf", "slow_dx", "slow_dy", "slow_conf")


def _radius_for(K: int) -> int:
    side = math.isqrt(K)
    if K == 0 or side * side != K or side % 2 == 0:
        raise DimensionError(f"window length {K} is not (2R+1)^2")
    return (side - 1) // 2


def hard_argmax(scores) -> Tuple[int, int]:
    """(dy, dx) of the largest score; the first index in enumeration order wins ties."""
    s = np.asarray(scores.data if isinstance(scores, Tensor) else scores).reshape(-1)
    R = _radius_for(s.size)
    dy, dx = window_offsets(R)[int(np.argmax(s))]
    return int(dy), int(dx)


def gaussian_kernel(p_star: Tuple[int, int], R: int, sigma: float) -> np.ndarray:
    """Kernel weights over the (2R+1)^2 window, peaked at ``p_star = (dy, dx)``."""
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be > 0, got {sigma}")
    offs = window_offsets(R)
    d2 = ((offs - np.asarray(p_star)) ** 2).sum(axis=1)
    return np.exp(-d2 / sigma**2) / (math.sqrt(2 * math.pi) * sigma)


def _kernel_volume(s: np.ndarray, R: int, cfg: MatchConfig) -> np.ndarray:
    pref = 1.0 / (math.sqrt(2 * math.pi) * cfg.sigma)
    if cfg.uniform_kernel:
        return np.full_like(s, pref)
    offs = window_offsets(R)
    best = offs[np.argmax(s, axis=1)]  # [N, H, W, 2]
    dy = offs[:, 0][None, :, None, None] - best[..., 0][:, None]
    dx = offs[:, 1][None, :, None, None] - best[..., 1][:, None]
    return (pref * np.exp(-(dy * dy + dx * dx) / cfg.sigma**2)).astype(s.dtype)


def soft_argmax_volume(scores: Tensor, cfg: MatchConfig = MatchConfig()) -> Tensor:
    """[N, K, H, W] scores -> [N, 2, H, W] displacements, channels (dx, dy)."""
    s = scores.data
    if s.ndim != 4:
        raise DimensionError(f"expected scores of shape [N, K, H, W], got {s.shape}")
    if not np.all(np.isfinite(s)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(s))[0])
        raise EvaluationError(f"non-finite correlation score at index {bad}")
    R = _radius_for(s.shape[1])
    offs = window_offsets(R).astype(s.dtype)
    oy = offs[:, 0][None, :, None, None]
    ox = offs[:, 1][None, :, None, None]
    g = _kernel_volume(s, R, cfg)
    z = g * s / cfg.tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    a = e / e.sum(axis=1, keepdims=True)
    # offsets i and K-1-i are negatives of each other; pairing them first makes
    # symmetric weights cancel exactly
    half = s.shape[1] // 2
    diff = a[:, :half] - a[:, ::-1][:, :half]
    dx = (diff * ox[:, :half]).sum(axis=1)
    dy = (diff * oy[:, :half]).sum(axis=1)
    out = np.stack([dx, dy], axis=1).astype(s.dtype, copy=False)

    def backward(grad):
        gdx, gdy = grad[:, 0:1], grad[:, 1:2]
        gz = a * (gdx * (ox - dx[:, None]) + gdy * (oy - dy[:, None]))
        return (gz * g / cfg.tau,)

    return record(out, (scores,), backward)


def kernel_soft_argmax(scores, cfg: MatchConfig = MatchConfig()) -> Tensor:
    """Displacement (dx, dy) for one window vector, differentiable w.r.t. the scores."""
    t = scores if isinstance(scores, Tensor) else Tensor(np.asarray(scores))
    K = t.size
    vol = reshape(t, (1, K, 1, 1))
    return reshape(soft_argmax_volume(vol, cfg), (2,))


def confidence_volume(scores: Tensor) -> Tensor:
    """Max over the window axis: [N, K, H, W] -> [N, 1, H, W]."""
    s = scores.data
    idx = np.argmax(s, axis=1)[:, None]
    out = np.take_along_axis(s, idx, axis=1)

    def backward(grad):
        gs = np.zeros_like(s)
        np.put_along_axis(gs, idx, grad, axis=1)
        return (gs,)

    return record(out, (scores,), backward)


def confidence(scores) -> float:
    s = np.asarray(scores.data if isinstance(scores, Tensor) else scores).reshape(-1)
    return float(s[np.argmax(s)])


def _scale_maps(volume: CorrelationVolume, cfg: MatchConfig) -> Tensor:
    # [T-1, K, H, W] -> [3, T, H, W] with the last pair duplicated
    disp = soft_argmax_volume(volume.scores, cfg)
    conf = confidence_volume(volume.scores)
    per_pair = concat([disp, conf], axis=1)  # [T-1, 3, H, W]
    n = per_pair.shape[0]
    padded = take(per_pair, list(range(n)) + [n - 1], axis=0)
    return transpose(padded, (1, 0, 2, 3))


def estimate_displacements(
    fast: CorrelationVolume, slow: CorrelationVolume, cfg: MatchConfig = MatchConfig()
) -> DisplacementTensor:
    if fast.shape != slow.shape or fast.radius != slow.radius:
        raise DimensionError(
            f"fast/slow volumes disagree: {fast.shape} R={fast.radius} vs {slow.shape} R={slow.radius}"
        )
    maps = concat([_scale_maps(fast, cfg), _scale_maps(slow, cfg)], axis=0)
    return DisplacementTensor(maps=maps, radius=fast.radius)
