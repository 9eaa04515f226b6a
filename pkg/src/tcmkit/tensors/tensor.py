"""Dense tensor container and the reverse-mode gradient tape.

Tensors are thin wrappers around contiguous numpy arrays. Differentiation is
tape based: while a :class:`GradTape` is active every primitive op whose inputs
require gradients appends a node (output, inputs, backward closure) to it.
``GradTape.backward`` replays those nodes in exact reverse order.
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import DimensionError, EvaluationError, StateError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_DEBUG = bool(os.environ.get("TCM_DEBUG"))


def resolve_dtype(dtype) -> np.dtype:
    """Map ``"f32"``/``"f64"`` or any numpy float dtype to a supported one."""
    if isinstance(dtype, str) and dtype in ("f32", "f64"):
        dtype = {"f32": np.float32, "f64": np.float64}[dtype]
    dt = np.dtype(dtype)
    if dt not in FLOAT_DTYPES:
        raise TypeError(f"unsupported dtype {dt}; expected float32 or float64")
    return dt


class Tensor:
    """A dense float tensor, row-major, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype in FLOAT_DTYPES else np.float32
        arr = np.asarray(data, dtype=resolve_dtype(dtype), order="C")
        if any(n < 1 for n in arr.shape):
            raise DimensionError(f"all extents must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.dtype, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_ACTIVE: list = []


class GradTape:
    """Records primitive ops for reverse-mode replay.

    Usage::

        with GradTape() as tape:
            y = ops.sigmoid(x)
            loss = ops.sum_all(y)
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.nodes: list = []
        self.annotations: dict = {}

    def __enter__(self) -> "GradTape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def annotate(self, key: str, **values) -> None:
        self.annotations.setdefault(key, []).append(values)

    def backward(self, output: Tensor, upstream=None, accumulate: bool = True) -> dict:
        """Propagate ``upstream`` (default ones) from ``output`` to every recorded input.

        Returns a mapping ``id(tensor) -> gradient array`` for every tensor reached.
        Leaf tensors with ``requires_grad`` additionally get their ``.grad``
        accumulated when ``accumulate`` is true.
        """
        if not self.nodes:
            raise StateError("tape is empty: nothing was recorded during forward")
        if upstream is None:
            upstream = np.ones_like(output.data)
        else:
            upstream = np.asarray(upstream.data if isinstance(upstream, Tensor) else upstream, dtype=output.dtype)
            if upstream.shape != output.shape:
                raise DimensionError(f"upstream gradient shape {upstream.shape} != output shape {output.shape}")
        grads = {id(output): upstream}
        produced = {id(node.out) for node in self.nodes}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.get(id(node.out))
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if key not in produced:
                    leaves[key] = inp
        if accumulate:
            for key, leaf in leaves.items():
                leaf.grad = grads[key].copy() if leaf.grad is None else leaf.grad + grads[key]
        return grads

    def gradients(self, output: Tensor, wrt: Sequence[Tensor], upstream=None) -> list:
        """Gradients of ``output`` w.r.t. each tensor in ``wrt`` (zeros if unreached)."""
        grads = self.backward(output, upstream, accumulate=False)
        return [grads.get(id(t), np.zeros_like(t.data)) for t in wrt]


def active_tape() -> Optional[GradTape]:
    return _ACTIVE[-1] if _ACTIVE else None


def record(out_data: np.ndarray, inputs: Iterable[Tensor], backward: Callable) -> Tensor:
    """Wrap ``out_data`` in a Tensor and append a node to the active tape if needed.

    ``backward`` maps the output gradient to a tuple of input gradients
    (``None`` for inputs that need none), in the order of ``inputs``.
    """
    inputs = tuple(inputs)
    if _DEBUG and not np.all(np.isfinite(out_data)):
        raise EvaluationError("non-finite values produced by a forward op")
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(out, inputs, backward))
    return out
