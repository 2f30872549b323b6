"""Binary checkpoint format.

Layout (all integers unsigned 32-bit little-endian)::

    b"SPWGAN01"
    count, then count x (key length, key, value length, JSON value)
    count, then count x (name length, name, rank, dims..., float32 LE data)
"""

from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPWGAN01"


class CheckpointFormatError(ValueError):
    pass


def _u32(value: int) -> bytes:
    return struct.pack("<I", value)


def _blob(data: bytes) -> bytes:
    return _u32(len(data)) + data


def encode(metadata: dict, tensors: dict[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_u32(len(metadata)))
    for key in sorted(metadata):
        out.write(_blob(key.encode()))
        out.write(_blob(json.dumps(metadata[key], sort_keys=True).encode()))
    out.write(_u32(len(tensors)))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        out.write(_blob(name.encode()))
        out.write(_u32(arr.ndim))
        for dim in arr.shape:
            out.write(_u32(dim))
        out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def blob(self, what: str) -> bytes:
        return self.take(self.u32(what), what)


def decode(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(buf)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    metadata = {}
    for _ in range(r.u32("metadata count")):
        key = r.blob("metadata key").decode()
        metadata[key] = json.loads(r.blob(f"metadata value {key}").decode())
    tensors = {}
    for _ in range(r.u32("tensor count")):
        name = r.blob("tensor name").decode()
        shape = tuple(r.u32(f"dims of {name}") for _ in range(r.u32(f"rank of {name}")))
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(r.take(4 * count, f"data of {name}"), dtype="<f4")
        tensors[name] = data.astype(np.float32).reshape(shape)
    if r.pos != len(buf):
        raise CheckpointFormatError("trailing bytes after last tensor")
    return metadata, tensors


def write(path: str | os.PathLike, metadata: dict, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(metadata, tensors))


def read(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes())
