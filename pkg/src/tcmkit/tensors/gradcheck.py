"""Central finite differences and the gradient-check registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from ..errors import EvaluationError, LookupFailure
from .tensor import GradTape, Tensor, resolve_dtype

# name -> factory(shapes, rng, dtype) -> (inputs, fn); fn(inputs) returns a Tensor
_REGISTRY: Dict[str, Callable] = {}
_DEFAULT_SHAPES: Dict[str, list] = {}


def register(name: str, default_shapes: Sequence[Sequence[int]]):
    """Decorator adding a gradcheck factory under ``name``."""

    def deco(factory):
        _REGISTRY[name] = factory
        _DEFAULT_SHAPES[name] = [tuple(s) for s in default_shapes]
        return factory

    return deco


def registered_ops() -> list:
    from .. import checks  # noqa: F401  populates the registry

    return sorted(_REGISTRY)


def default_shapes(name: str) -> list:
    registered_ops()
    return list(_DEFAULT_SHAPES[name])


def _scalar(value) -> float:
    arr = value.data if isinstance(value, Tensor) else np.asarray(value)
    return float(np.sum(arr))


def finite_diff_grad(f: Callable, x: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x.data`` is perturbed in place and restored after every element.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar(f(x))
        flat[i] = orig - eps
        fm = _scalar(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite function value at flat index {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad.astype(x.dtype)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| scaled by the larger of the two infinity norms (with a floor)."""
    diff = np.max(np.abs(analytic - numeric)) if analytic.size else 0.0
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(diff / scale)


@dataclass
class Report:
    op: str
    tol: float
    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return all(err <= self.tol for err in self.errors.values())

    def rows(self):
        for name, err in self.errors.items():
            yield self.op, name, err, err <= self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={v:.3e}" for k, v in self.errors.items())
        return f"{status} {self.op} max_rel_err={self.max_error:.3e} tol={self.tol:g} [{parts}]"


def gradcheck(
    op_name: str,
    shapes=None,
    seed: int = 0,
    tol: float = 1e-5,
    dtype="f64",
    eps: float = 1e-6,
    corrupt: float = 0.0,
) -> Report:
    """Compare tape gradients of a registered op with central differences.

    The scalar probed is ``sum(op(inputs) * P)`` for a fixed random projection
    ``P``, so ops whose plain sum is constant (softmax) are still exercised.
    ``corrupt`` is added to every analytic gradient (fault injection).
    """
    ops_available = registered_ops()
    if op_name not in _REGISTRY:
        raise LookupFailure(f"unknown op {op_name!r}; registered: {', '.join(ops_available)}")
    dt = resolve_dtype(dtype)
    if shapes is None:
        shapes = _DEFAULT_SHAPES[op_name]
    shapes = [tuple(s) for s in shapes]
    total = sum(int(np.prod(s)) for s in shapes)
    if total > 4096:
        raise ValueError(f"gradcheck shapes too large ({total} elements > 4096)")
    rng = np.random.default_rng(seed)
    inputs, fn = _REGISTRY[op_name](shapes, rng, dt)
    for t in inputs.values():
        t.requires_grad = True

    with GradTape() as tape:
        out = fn(inputs)
    proj = rng.standard_normal(out.shape).astype(dt)
    names = list(inputs)
    analytic = tape.gradients(out, [inputs[n] for n in names], upstream=proj)

    report = Report(op=op_name, tol=tol)
    for name, ga in zip(names, analytic):
        target = inputs[name]

        def f(_x, _proj=proj):
            return np.sum(fn(inputs).data.astype(np.float64) * _proj)

        gn = finite_diff_grad(f, target, eps)
        report.errors[name] = relative_error(ga.astype(np.float64) + corrupt, gn.astype(np.float64))
    return report


def gradcheck_suite(ops=None, tol: float = 1e-4, seed: int = 0, dtype="f64") -> list:
    names = registered_ops() if ops is None else list(ops)
    return [gradcheck(name, seed=seed, tol=tol, dtype=dtype) for name in names]
