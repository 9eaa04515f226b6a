"""TSR1 tensor files and parameter bundles.

TSR1 layout: ``b"TSR1"``, dtype code (0 = float32, 1 = float64), ndim,
two zero bytes, ``ndim`` little-endian uint32 extents, then the raw
little-endian row-major element data.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor

MAGIC = b"TSR1"
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
MANIFEST = "manifest.tsv"


class FormatError(DimensionError):
    """Malformed TSR1 payload."""


def encode_tsr1(array) -> bytes:
    arr = np.asarray(array.data if isinstance(array, Tensor) else array)
    if arr.dtype not in _CODES:
        raise TypeError(f"TSR1 stores float32/float64 only, got {arr.dtype}")
    if arr.ndim > 255:
        raise FormatError("too many dimensions for TSR1")
    header = MAGIC + struct.pack("<BBxx", _CODES[arr.dtype], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes()
    return header + payload


def decode_tsr1(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("not a TSR1 stream (bad magic)")
    code, ndim = struct.unpack_from("<BBxx", buf, 4)
    if code not in _DTYPES:
        raise FormatError(f"unknown TSR1 dtype code {code}")
    offset = 8 + 4 * ndim
    if len(buf) < offset:
        raise FormatError("truncated TSR1 header")
    shape = struct.unpack_from(f"<{ndim}I", buf, 8)
    dt = _DTYPES[code]
    count = int(np.prod(shape)) if ndim else 1
    if len(buf) - offset != count * dt.itemsize:
        raise FormatError(f"TSR1 payload has {len(buf) - offset} bytes, expected {count * dt.itemsize}")
    arr = np.frombuffer(buf, dtype=dt, count=count, offset=offset).reshape(shape)
    return arr.astype(dt.newbyteorder("="), copy=True)


def save_tsr1(path, array) -> None:
    Path(path).write_bytes(encode_tsr1(array))


def load_tsr1(path) -> np.ndarray:
    return decode_tsr1(Path(path).read_bytes())


def save_bundle(directory, params: Mapping[str, Tensor]) -> None:
    """Write one TSR1 file per parameter plus ``manifest.tsv`` (name, filename, shape)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (name, tensor) in enumerate(params.items()):
        fname = f"p{i:03d}.tsr"
        save_tsr1(directory / fname, tensor.data)
        shape = "x".join(str(n) for n in tensor.shape)
        lines.append(f"{name}\t{fname}\t{shape}\n")
    with open(directory / MANIFEST, "w", newline="\n") as fh:
        fh.writelines(lines)


def load_bundle(directory) -> Dict[str, Tensor]:
    directory = Path(directory)
    params: Dict[str, Tensor] = {}
    with open(directory / MANIFEST) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            name, fname, shape = line.split("\t")
            arr = load_tsr1(directory / fname)
            expected = tuple(int(n) for n in shape.split("x")) if shape else ()
            if arr.shape != expected:
                raise FormatError(f"{name}: file shape {arr.shape} != manifest shape {expected}")
            params[name] = Tensor(arr, dtype=arr.dtype, name=name)
    return params


def is_bundle(directory) -> bool:
    return os.path.isfile(os.path.join(directory, MANIFEST))
