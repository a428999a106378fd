"""Flat binary tensor files.

Layout, all little-endian:

    magic   4 bytes  b"TWLT"
    version u32      currently 1
    rank    u32
    dims    rank * u64
    payload float32 row-major, product(dims) values

The format is intentionally dumb: a header check, then a memcpy.  Each way
a file can be malformed raises its own exception type so callers can map
failures to distinct exit codes.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "TensorFileError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedFileError",
    "DimOverflowError",
    "write_tensor",
    "read_tensor",
]

MAGIC = b"TWLT"
VERSION = 1

_MAX_RANK = 32
_MAX_ELEMENTS = 1 << 40  # keeps dim products far from u64 / memory trouble


class TensorFileError(Exception):
    """Base class for malformed tensor files."""


class BadMagicError(TensorFileError):
    pass


class VersionMismatchError(TensorFileError):
    pass


class TruncatedFileError(TensorFileError):
    pass


class DimOverflowError(TensorFileError):
    pass


def write_tensor(path, array) -> None:
    """Write an array as a version-1 tensor file (payload cast to float32)."""
    a = np.ascontiguousarray(np.asarray(array, dtype=np.float32))
    if a.ndim < 1:
        a = a.reshape(1)
    if a.ndim > _MAX_RANK:
        raise DimOverflowError(f"rank {a.ndim} exceeds the format limit {_MAX_RANK}")
    if a.size > _MAX_ELEMENTS:
        raise DimOverflowError(f"{a.size} elements exceed the format limit")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MAGIC, VERSION, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.astype("<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a tensor file, validating the header before touching the payload."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a tensor file (magic mismatch)")
    if len(data) < 12:
        raise TruncatedFileError(f"{path}: header cut short")
    version, rank = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if rank < 1 or rank > _MAX_RANK:
        raise DimOverflowError(f"{path}: rank {rank} outside [1, {_MAX_RANK}]")
    header_end = 12 + 8 * rank
    if len(data) < header_end:
        raise TruncatedFileError(f"{path}: dimension list cut short")
    dims = struct.unpack_from(f"<{rank}Q", data, 12)
    elements = 1
    for dim in dims:
        elements *= dim
        if elements > _MAX_ELEMENTS:
            raise DimOverflowError(f"{path}: dims {dims} overflow the format limit")
    expected = header_end + 4 * elements
    if len(data) != expected:
        raise TruncatedFileError(
            f"{path}: payload is {len(data) - header_end} bytes, dims {dims} need {4 * elements}"
        )
    payload = np.frombuffer(data, dtype="<f4", offset=header_end)
    return payload.reshape(dims).astype(np.float32)
