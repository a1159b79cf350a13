"""FTEN v1 binary tensor files.

Layout::

    b"FTEN" | version u8 (=1) | dtype u8 (1 = float32) | ndim u8
    | ndim x u32 little-endian dims | row-major float32 little-endian payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ShapeError

MAGIC = b"FTEN"
VERSION = 1
DTYPE_FLOAT32 = 1

_DTYPES = {DTYPE_FLOAT32: np.dtype("<f4")}


def encode(array) -> bytes:
    arr = np.asarray(getattr(array, "values", array))
    if arr.dtype != np.float32:
        raise ShapeError(f"FTEN v1 stores float32 only, got {arr.dtype}")
    if arr.ndim > 255:
        raise ShapeError("too many dimensions")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_FLOAT32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < 7 or buf[:4] != MAGIC:
        raise ValueError("not an FTEN file (bad magic)")
    version, dtype, ndim = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported FTEN version {version}")
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported FTEN dtype code {dtype}")
    offset = 7 + 4 * ndim
    if len(buf) < offset:
        raise ValueError("truncated FTEN header")
    shape = struct.unpack_from(f"<{ndim}I", buf, 7)
    dt = _DTYPES[dtype]
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(buf) - offset != expected:
        raise ValueError(f"FTEN payload is {len(buf) - offset} bytes, header implies {expected}")
    return np.frombuffer(buf, dtype=dt, offset=offset).reshape(shape).astype(np.float32)


def write(path, array) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode(array))


def read(path) -> np.ndarray:
    return decode(Path(path).read_bytes())
