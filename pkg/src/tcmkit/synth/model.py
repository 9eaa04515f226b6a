"""ToyNet: a small per-frame stem, an optional temporal block, and a linear head.

Without the temporal block nothing mixes information across frames and the
head averages over time, so the network cannot see tempo. ``temporal="tcm"``
inserts the correlation block after the stem; ``temporal="conv"`` inserts a
depthwise temporal convolution branch instead (the robustness baseline).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..block import TcmConfig, TcmParams, init_tcm_params, tcm_forward
from ..errors import ConfigurationError
from ..tensors import (
    Tensor,
    add,
    avg_pool2d,
    conv_depthwise_2d,
    conv_pointwise,
    conv_temporal,
    gap_spatial,
    linear,
    order_invariant_mean,
    relu,
)
from ..tensors.io import load_bundle, save_bundle

TEMPORAL_MODES = ("none", "tcm", "conv")


@dataclass(frozen=True)
class ToyNetConfig:
    frames: int = 8
    size: int = 32
    num_classes: int = 3
    widths: tuple = (8, 16)
    temporal: str = "none"
    tcm_c_mid: int = 32
    conv_kernel: int = 3
    head_init: str = "uniform"
    # fixed input standardisation; the defaults match the synthetic clips
    # (a 6x6 unit square on a 32x32 dark frame covers ~3.5% of the pixels)
    input_mean: float = 0.035
    input_std: float = 0.18

    def __post_init__(self):
        if self.temporal not in TEMPORAL_MODES:
            raise ConfigurationError(f"temporal must be one of {TEMPORAL_MODES}, got {self.temporal!r}")
        if self.head_init not in ("uniform", "zero"):
            raise ConfigurationError(f"head_init must be 'uniform' or 'zero', got {self.head_init!r}")
        if not self.input_std > 0:
            raise ConfigurationError(f"input_std must be > 0, got {self.input_std}")
        if self.size % 4:
            raise ConfigurationError(f"frame size must be divisible by 4, got {self.size}")

    @property
    def channels(self) -> int:
        return self.widths[-1]

    @property
    def tcm(self) -> TcmConfig:
        return TcmConfig(channels=self.channels, frames=self.frames, c_mid=self.tcm_c_mid)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ToyNetConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


def _he(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


class ToyNet:
    def __init__(self, config: ToyNetConfig, params: Dict[str, Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ToyNetConfig, seed: int = 0, dtype=np.float32) -> "ToyNet":
        rng = np.random.default_rng(seed)
        p: Dict[str, Tensor] = {}
        cin = 1
        for i, cout in enumerate(config.widths, start=1):
            p[f"stem{i}.dw.kernel"] = _he(rng, (cin, 3, 3), 9, dtype)
            p[f"stem{i}.pw.weight"] = _he(rng, (cout, cin), cin, dtype)
            p[f"stem{i}.pw.bias"] = Tensor(np.zeros(cout, dtype))
            cin = cout
        C = config.channels
        if config.temporal == "tcm":
            p.update(init_tcm_params(config.tcm, rng, dtype).named("tcm."))
        elif config.temporal == "conv":
            p["tconv.kernel"] = _he(rng, (C, config.conv_kernel), config.conv_kernel, dtype)
            p["tconv.proj.weight"] = Tensor(np.zeros((C, C), dtype))
            p["tconv.proj.bias"] = Tensor(np.zeros(C, dtype))
        if config.head_init == "zero":
            p["head.weight"] = Tensor(np.zeros((config.num_classes, C), dtype))
        else:
            p["head.weight"] = _he(rng, (config.num_classes, C), C, dtype)
        p["head.bias"] = Tensor(np.zeros(config.num_classes, dtype))
        for name, t in p.items():
            t.name = name
        return cls(config, p)

    @property
    def tcm_params(self) -> Optional[TcmParams]:
        if self.config.temporal != "tcm":
            return None
        return TcmParams.from_named(self.config.tcm, self.params, "tcm.")

    def features(self, video: Tensor) -> Tensor:
        """Stem output [C, T, H/4, W/4] after the optional temporal block."""
        p = self.params
        cfg = self.config
        h = Tensor((video.data - video.dtype.type(cfg.input_mean)) / video.dtype.type(cfg.input_std),
                   dtype=video.dtype)
        for i in range(1, len(self.config.widths) + 1):
            h = conv_depthwise_2d(h, p[f"stem{i}.dw.kernel"])
            h = relu(conv_pointwise(h, p[f"stem{i}.pw.weight"], p[f"stem{i}.pw.bias"]))
            h = avg_pool2d(h, 2)
        if self.config.temporal == "tcm":
            h = tcm_forward(h, self.tcm_params)
        elif self.config.temporal == "conv":
            z = relu(conv_temporal(h, p["tconv.kernel"]))
            h = add(h, conv_pointwise(z, p["tconv.proj.weight"], p["tconv.proj.bias"]))
        return h

    def forward(self, video: Tensor) -> Tensor:
        """Class logits for one clip [1, T, H, W]."""
        h = self.features(video)
        pooled = order_invariant_mean(gap_spatial(h), axis=1)
        return linear(pooled, self.params["head.weight"], self.params["head.bias"])

    __call__ = forward

    def predict(self, video: Tensor) -> int:
        return int(np.argmax(self.forward(video).data))

    def copy(self) -> "ToyNet":
        return ToyNet(self.config, {k: Tensor(v.data.copy(), dtype=v.dtype, name=k) for k, v in self.params.items()})

    def save(self, directory) -> None:
        directory = Path(directory)
        save_bundle(directory, self.params)
        with open(directory / "config.json", "w", newline="\n") as fh:
            json.dump(self.config.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "ToyNet":
        directory = Path(directory)
        with open(directory / "config.json") as fh:
            config = ToyNetConfig.from_dict(json.load(fh))
        return cls(config, load_bundle(directory))
