"""Synthetic visual-tempo clips: one bright square sliding at a class-specific speed."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np

from ..errors import ConfigurationError
from ..tensors import Tensor
from ..tensors.io import load_tsr1, save_tsr1

PATTERN_SIZE = 6
DEFAULT_VELOCITIES = (0, 1, 2)


@dataclass
class SynthSample:
    video: Tensor  # [1, T, H, W], values in [0, 1]
    label: int
    velocity: float
    start: tuple  # (y, x) of the square's top-left corner in frame 0
    pattern: int = 0
    seed: int = 0


def _coverage(n: int, start: float, size: float) -> np.ndarray:
    # fraction of each unit pixel [i, i+1) covered by [start, start + size)
    lo = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(lo + 1, start + size) - np.maximum(lo, start), 0.0, 1.0)


def render_square(H: int, W: int, y: float, x: float, size: float = PATTERN_SIZE) -> np.ndarray:
    """Area-weighted (anti-aliased) square with top-left corner at sub-pixel (y, x)."""
    return np.outer(_coverage(H, y, size), _coverage(W, x, size))


def make_clip(velocity: float, T: int, H: int, W: int, y0: float, x0: float,
              size: float = PATTERN_SIZE, dtype=np.float32) -> np.ndarray:
    frames = [render_square(H, W, y0, x0 + velocity * t, size) for t in range(T)]
    return np.stack(frames)[None].astype(dtype)


def gen_dataset(classes: Sequence[float] = DEFAULT_VELOCITIES, count: int = 300, T: int = 8, H: int = 32,
                W: int = 32, seed: int = 42, size: float = PATTERN_SIZE, dtype=np.float32) -> List[SynthSample]:
    """``count`` clips, labels assigned round-robin so classes stay balanced.

    The square moves rightwards; its start is drawn with sub-pixel jitter so
    the whole trajectory stays inside the frame.
    """
    classes = list(classes)
    vmax = max(abs(v) for v in classes)
    if vmax * (T - 1) >= W - size or size >= H:
        raise ConfigurationError(
            f"trajectory overflow: velocity {vmax} over {T} frames does not fit a {size}px pattern in {H}x{W}"
        )
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        label = i % len(classes)
        v = classes[label]
        sample_seed = int(rng.integers(2**31))
        srng = np.random.default_rng(sample_seed)
        span = abs(v) * (T - 1)
        x0 = srng.uniform(0.0, W - size - span) + (span if v < 0 else 0.0)
        y0 = srng.uniform(0.0, H - size)
        video = make_clip(v, T, H, W, y0, x0, size, dtype)
        samples.append(SynthSample(Tensor(video, dtype=dtype), label, v, (y0, x0), 0, sample_seed))
    return samples


def resample_stride(video, stride: int):
    """Frames 0, s, 2s, ... then the last selected frame repeated to restore T."""
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    arr = video.data if isinstance(video, Tensor) else np.asarray(video)
    T0 = arr.shape[1]
    idx = list(range(0, T0, stride))
    idx += [idx[-1]] * (T0 - len(idx))
    out = np.ascontiguousarray(arr[:, idx])
    return Tensor(out, dtype=out.dtype) if isinstance(video, Tensor) else out


def centroid_x(frame: np.ndarray) -> float:
    mass = frame.sum()
    return float((frame.sum(axis=0) * np.arange(frame.shape[1])).sum() / mass)


def save_dataset(directory, samples: Sequence[SynthSample]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "label", "velocity", "seed"])
        for i, s in enumerate(samples):
            save_tsr1(directory / f"{i:05d}.tsr", s.video.data)
            writer.writerow([i, s.label, repr(float(s.velocity)), s.seed])


def load_dataset(directory) -> List[SynthSample]:
    directory = Path(directory)
    samples = []
    with open(directory / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            arr = load_tsr1(directory / f"{int(row['index']):05d}.tsr")
            samples.append(
                SynthSample(Tensor(arr, dtype=arr.dtype), int(row["label"]), float(row["velocity"]), (), 0,
                            int(row["seed"]))
            )
    return samples
