"""Minimal dense-tensor engine: primitives, tape-based gradients, checks, TSR1 I/O."""

from .tensor import GradTape, Tensor, active_tape, as_tensor, record, resolve_dtype
from .ops import (
    add,
    avg_pool2d,
    concat,
    conv_depthwise_2d,
    conv_pointwise,
    conv_temporal,
    cross_entropy,
    gap_spatial,
    linear,
    mean,
    mul,
    mul_broadcast_time,
    l2_normalize,
    order_invariant_mean,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_last,
    sum_all,
    take,
    transpose,
)
from .gradcheck import Report, finite_diff_grad, gradcheck, gradcheck_suite, registered_ops
from .io import decode_tsr1, encode_tsr1, load_bundle, load_tsr1, save_bundle, save_tsr1
