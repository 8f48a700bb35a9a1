"""FOLT binary tensor files.

Layout: magic ``FOLT`` (4 bytes), version byte (1), dtype byte (1 =
float32), rank byte r in [1, 4], r little-endian u32 dims, then the
row-major float32 little-endian payload. Header size is 7 + 4*r bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import FoltFormatError

MAGIC = b"FOLT"
VERSION = 1
DTYPE_FLOAT32 = 1
MAX_RANK = 4

# Byte offsets of the fixed header fields.
_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_DTYPE = 5
_OFF_RANK = 6
_OFF_DIMS = 7


def header_size(rank: int) -> int:
    return _OFF_DIMS + 4 * rank


def write_tensor(tensor, path) -> None:
    """Write a rank 1..4 tensor of finite floats as a FOLT file."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise ValueError(f"tensor rank must be in [1, {MAX_RANK}], got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"tensor dims must be >= 1, got shape {arr.shape}")
    if any(d > 0xFFFFFFFF for d in arr.shape):
        raise ValueError(f"tensor dims must fit in u32, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite entries")
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise ValueError("tensor overflows float32")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_FLOAT32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + payload.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a FOLT file back into a float32 array.

    Raises FoltFormatError naming the byte offset of the first problem.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _OFF_DIMS:
        raise FoltFormatError(
            f"{path}: truncated header, {len(data)} bytes (need {_OFF_DIMS}) at offset {len(data)}"
        )
    if data[_OFF_MAGIC:_OFF_MAGIC + 4] != MAGIC:
        raise FoltFormatError(f"{path}: bad magic {data[:4]!r} at offset {_OFF_MAGIC}")
    if data[_OFF_VERSION] != VERSION:
        raise FoltFormatError(
            f"{path}: unsupported version {data[_OFF_VERSION]} at offset {_OFF_VERSION}"
        )
    if data[_OFF_DTYPE] != DTYPE_FLOAT32:
        raise FoltFormatError(
            f"{path}: unsupported dtype {data[_OFF_DTYPE]} at offset {_OFF_DTYPE}"
        )
    rank = data[_OFF_RANK]
    if rank < 1 or rank > MAX_RANK:
        raise FoltFormatError(f"{path}: bad rank {rank} at offset {_OFF_RANK}")
    hsize = header_size(rank)
    if len(data) < hsize:
        raise FoltFormatError(
            f"{path}: truncated dims, {len(data)} bytes (need {hsize}) at offset {len(data)}"
        )
    dims = struct.unpack(f"<{rank}I", data[_OFF_DIMS:hsize])
    for i, d in enumerate(dims):
        if d < 1:
            raise FoltFormatError(
                f"{path}: zero dim at offset {_OFF_DIMS + 4 * i}"
            )
    count = int(np.prod(dims, dtype=np.int64))
    expected = hsize + 4 * count
    if len(data) != expected:
        raise FoltFormatError(
            f"{path}: payload length mismatch, expected {expected - hsize} bytes "
            f"got {len(data) - hsize} at offset {hsize}"
        )
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=hsize)
    bad = ~np.isfinite(arr)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise FoltFormatError(
            f"{path}: non-finite entry at offset {hsize + 4 * first}"
        )
    return arr.reshape(dims).astype(np.float32, copy=True)
