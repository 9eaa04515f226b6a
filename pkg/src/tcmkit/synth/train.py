"""SGD-with-momentum training, evaluation and the stride-resampling sweep."""

from __future__ import annotations

import csv
import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, TrainingError
from ..tensors import GradTape, cross_entropy
from .data import SynthSample, resample_stride
from .model import ToyNet

log = logging.getLogger(__name__)


def train(model: ToyNet, data: Sequence[SynthSample], epochs: int = 30, lr: float = 0.01, seed: int = 0,
          batch_size: int = 16, momentum: float = 0.9, callback=None) -> Tuple[ToyNet, List[float]]:
    """Train ``model`` in place; returns it with the per-epoch mean loss.

    Gradients are averaged over each mini-batch, samples processed in a
    fixed order so results do not depend on anything but ``seed``.
    """
    if not data:
        raise ConfigurationError("training set is empty")
    if lr < 0:
        raise ConfigurationError(f"learning rate must be >= 0, got {lr}")
    rng = np.random.default_rng(seed)
    params = model.params
    velocity = {k: np.zeros_like(v.data) for k, v in params.items()}
    for t in params.values():
        t.requires_grad = True
    curve = []
    try:
        # overflow is reported as a TrainingError, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(epochs):
                order = rng.permutation(len(data))
                total = 0.0
                for start in range(0, len(order), batch_size):
                    batch = order[start:start + batch_size]
                    grads = {k: np.zeros_like(v.data) for k, v in params.items()}
                    for i in batch:
                        sample = data[i]
                        with GradTape() as tape:
                            loss = cross_entropy(model.forward(sample.video), sample.label)
                        got = tape.gradients(loss, list(params.values()))
                        for k, g in zip(params, got):
                            grads[k] += g
                        total += float(loss.data)
                    if not np.isfinite(total):
                        raise TrainingError(f"loss became non-finite in epoch {epoch}", epoch=epoch)
                    for k, t in params.items():
                        v = velocity[k]
                        v *= momentum
                        v += grads[k] / len(batch)
                        t.data -= (lr * v).astype(t.dtype)
                mean_loss = total / len(data)
                curve.append(mean_loss)
                log.info("epoch %d loss %.6f", epoch, mean_loss)
                if callback is not None:
                    callback(epoch, mean_loss)
    finally:
        for t in params.values():
            t.requires_grad = False
    return model, curve


def evaluate(model: ToyNet, data: Sequence[SynthSample], stride: int = 1) -> float:
    """Top-1 accuracy after re-reading every clip with the given frame stride."""
    if not data:
        raise ConfigurationError("evaluation set is empty")
    correct = 0
    for sample in data:
        video = resample_stride(sample.video, stride)
        correct += int(model.predict(video) == sample.label)
    return correct / len(data)


def stride_sweep(model: ToyNet, data: Sequence[SynthSample], strides: Iterable[int] = (1, 2, 3, 4)) -> List[Tuple[int, float]]:
    return [(s, evaluate(model, data, s)) for s in strides]


def accuracy_drop(sweep: Sequence[Tuple[int, float]]) -> float:
    """Stride-1 accuracy minus the worst accuracy over the sweep."""
    acc = dict(sweep)
    return acc[1] - min(acc.values())


def write_curve(path, curve: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(curve):
            w.writerow([i, repr(float(v))])


def write_sweep(path, sweep: Sequence[Tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stride", "accuracy"])
        for s, a in sweep:
            w.writerow([s, repr(float(a))])
