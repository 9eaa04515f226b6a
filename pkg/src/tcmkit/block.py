"""The plug-in temporal correlation block.

``y = x + out_proj(attend(transform(displacements(correlate(normalize(reduce(x)))))))``

``out_proj`` starts at zero, so a freshly initialised block is an exact
identity on its input and can be dropped behind any stage of a host network.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .correlation import correlate_pairs, default_radius, default_reduced_channels, reduce_channels
from .errors import ConfigurationError, DimensionError, StateError
from .match import MatchConfig, estimate_displacements
from .sampling import build_pairs
from .tam import (
    TamParams,
    apply_attention,
    init_tam_params,
    kernel_size_for,
    temporal_attention,
    transform_displacements,
)
from .tensors import GradTape, Tensor, active_tape, add, conv_pointwise, l2_normalize

RADIUS_CAP = 7


@dataclass(frozen=True)
class TcmConfig:
    channels: int
    frames: int
    reduced_channels: Optional[int] = None
    radius: Optional[int] = None
    radius_cap: int = RADIUS_CAP
    sigma: float = 5.0
    tau: float = 0.01
    c_mid: int = 64
    attention_mode: str = "shared"
    kernel_size: Optional[int] = None
    normalize: bool = True

    def __post_init__(self):
        if self.frames < 2:
            raise ConfigurationError("need at least two frames to form pairs")
        if self.channels < 1:
            raise ConfigurationError("channels must be >= 1")
        rc = self.resolved_reduced_channels
        if not 1 <= rc <= self.channels:
            raise ConfigurationError(f"reduced_channels must be in [1, {self.channels}], got {rc}")

    @property
    def resolved_reduced_channels(self) -> int:
        if self.reduced_channels is None:
            return default_reduced_channels(self.channels)
        return self.reduced_channels

    @property
    def resolved_kernel_size(self) -> int:
        return kernel_size_for(self.frames) if self.kernel_size is None else self.kernel_size

    def radius_for(self, H: int) -> int:
        return self.radius if self.radius is not None else default_radius(H, self.radius_cap)

    @property
    def match(self) -> MatchConfig:
        return MatchConfig(sigma=self.sigma, tau=self.tau)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TcmParams:
    config: TcmConfig
    reduce_weight: Tensor
    reduce_bias: Tensor
    tam: TamParams
    out_weight: Tensor
    out_bias: Tensor

    def named(self, prefix: str = "") -> Dict[str, Tensor]:
        out = {f"{prefix}reduce.weight": self.reduce_weight, f"{prefix}reduce.bias": self.reduce_bias}
        out.update(self.tam.named(prefix + "tam."))
        out[f"{prefix}out_proj.weight"] = self.out_weight
        out[f"{prefix}out_proj.bias"] = self.out_bias
        return out

    @classmethod
    def from_named(cls, config: TcmConfig, named: Mapping[str, Tensor], prefix: str = "") -> "TcmParams":
        return cls(
            config=config,
            reduce_weight=named[f"{prefix}reduce.weight"],
            reduce_bias=named[f"{prefix}reduce.bias"],
            tam=TamParams.from_named(dict(named), prefix + "tam.", config.attention_mode),
            out_weight=named[f"{prefix}out_proj.weight"],
            out_bias=named[f"{prefix}out_proj.bias"],
        )


def init_tcm_params(config: TcmConfig, rng=None, dtype=np.float32) -> TcmParams:
    rng = np.random.default_rng(0) if rng is None else rng
    C, Cr = config.channels, config.resolved_reduced_channels
    bound = math.sqrt(6.0 / C)
    reduce_w = Tensor(rng.uniform(-bound, bound, size=(Cr, C)).astype(dtype))
    tam = init_tam_params(config.frames, config.c_mid, rng, dtype, config.attention_mode,
                          config.resolved_kernel_size)
    return TcmParams(
        config=config,
        reduce_weight=reduce_w,
        reduce_bias=Tensor(np.zeros(Cr, dtype)),
        tam=tam,
        out_weight=Tensor(np.zeros((C, config.c_mid), dtype)),
        out_bias=Tensor(np.zeros(C, dtype)),
    )


def tempo_branch(x: Tensor, params: TcmParams) -> Tuple[Tensor, Tensor]:
    """Attended tempo features [C_mid, T, H, W] and the attention weights [T]."""
    cfg = params.config
    C, T, H, W = x.shape
    R = cfg.radius_for(H)
    feats = reduce_channels(x, params.reduce_weight, params.reduce_bias)
    if cfg.normalize:
        # unit-length features keep scores in [-1, 1] whatever the host scale
        feats = l2_normalize(feats, axis=0)
    fast, slow = correlate_pairs(feats, build_pairs(T), R)
    disp = estimate_displacements(fast, slow, cfg.match)
    f = transform_displacements(disp, params.tam)
    w = temporal_attention(f, params.tam.attention, mode=params.tam.mode)
    return apply_attention(f, w), w


def tcm_forward(x: Tensor, params: TcmParams) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"tcm_forward expects [C, T, H, W], got {x.shape}")
    if x.shape[1] < 2:
        raise ConfigurationError("need at least two frames to form pairs")
    if x.shape[0] != params.config.channels:
        raise DimensionError(f"block built for {params.config.channels} channels, input has shape {x.shape}")
    branch, _ = tempo_branch(x, params)
    y = add(x, conv_pointwise(branch, params.out_weight, params.out_bias))
    tape = active_tape()
    if tape is not None:
        tape.annotate("tcm", x=x, params=params, out=y)
    return y


def tcm_backward(tape: Optional[GradTape], upstream) -> Dict[str, np.ndarray]:
    """Gradients of the most recent block forward on ``tape``: ``"x"`` plus every parameter name."""
    if tape is None or not tape.annotations.get("tcm"):
        raise StateError("no block forward recorded on this tape")
    rec = tape.annotations["tcm"][-1]
    x, params, y = rec["x"], rec["params"], rec["out"]
    named = params.named()
    wrt = [x] + list(named.values())
    saved = {id(t): t.requires_grad for t in wrt}
    if not all(saved.values()):
        raise StateError("input and parameters must require grad before the forward pass")
    grads = tape.gradients(y, wrt, upstream=upstream)
    out = {"x": grads[0]}
    out.update(zip(named, grads[1:]))
    return out


def param_census(params: Union[TcmParams, Mapping[str, Tensor]]) -> List[Tuple[str, int]]:
    """(name, element count) per parameter tensor, with a final ("total", n) row."""
    named = params.named() if hasattr(params, "named") else dict(params)
    rows = [(name, int(t.size)) for name, t in named.items()]
    rows.append(("total", sum(n for _, n in rows)))
    return rows


def requires_grad_(params: Union[TcmParams, Mapping[str, Tensor]], flag: bool = True):
    named = params.named() if hasattr(params, "named") else params
    for t in named.values():
        t.requires_grad = flag
    return params
