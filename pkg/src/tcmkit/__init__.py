"""Temporal correlation block: frame-pair correlation, soft-argmax motion and temporal attention."""

from .block import TcmConfig, TcmParams, init_tcm_params, param_census, tcm_backward, tcm_forward
from .correlation import (
    CorrConfig,
    CorrelationVolume,
    correlate,
    correlate_oracle,
    correlate_pairs,
    correlation_flops,
    reduce_channels,
)
from .match import (
    DisplacementTensor,
    MatchConfig,
    confidence,
    estimate_displacements,
    gaussian_kernel,
    hard_argmax,
    kernel_soft_argmax,
)
from .sampling import PairSpec, build_pairs
from .tam import apply_attention, kernel_size_for, temporal_attention, transform_displacements
from .tensors import GradTape, Tensor

__version__ = "0.1.0"
