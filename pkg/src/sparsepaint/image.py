"""Image and mask handling: netpbm I/O, validation and centre cropping.

Images are float arrays of shape ``(m, n, k)`` with values in ``[0, 1]``;
``k`` is 1 for greyscale and 3 for colour.  Masks are boolean arrays of
shape ``(m, n)``; a single mask plane is shared by all channels.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported netpbm files."""


class DimensionError(ValueError):
    """Raised when array shapes do not fit an operation."""


_MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}


def as_image(data, copy: bool = False) -> np.ndarray:
    """Coerce ``data`` to a float64 ``(m, n, k)`` image and validate it."""
    img = np.asarray(data, dtype=np.float64)
    if copy:
        img = img.copy()
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise DimensionError(f"expected (m, n) or (m, n, k) with k in {{1, 3}}, got {img.shape}")
    if img.size and (not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return img


def as_mask(data) -> np.ndarray:
    """Coerce ``data`` to a boolean ``(m, n)`` mask; entries must be exactly 0 or 1."""
    arr = np.asarray(data)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise DimensionError(f"mask must be two-dimensional, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask entries must be exactly 0 or 1")
        arr = arr.astype(bool)
    return arr


def _read_token(buf: bytes, pos: int, field: str) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos : pos + 1]
        if ch == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError(f"truncated header: missing {field}")
    return buf[start:pos], pos


def _parse_int(token: bytes, field: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ImageFormatError(f"malformed {field}: {token!r}") from None
    if value <= 0:
        raise ImageFormatError(f"malformed {field}: {value}")
    return value


def decode_netpbm(buf: bytes) -> np.ndarray:
    """Decode binary PGM/PPM bytes into an ``(m, n, k)`` uint8 array."""
    magic = buf[:2]
    if magic not in _MAGIC_CHANNELS:
        raise ImageFormatError(f"unsupported magic number {magic!r}; expected P5 or P6")
    k = _MAGIC_CHANNELS[magic]
    pos = 2
    width_tok, pos = _read_token(buf, pos, "width")
    height_tok, pos = _read_token(buf, pos, "height")
    maxval_tok, pos = _read_token(buf, pos, "maxval")
    width = _parse_int(width_tok, "width")
    height = _parse_int(height_tok, "height")
    maxval = _parse_int(maxval_tok, "maxval")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 255 is supported")
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ImageFormatError("truncated payload: missing whitespace after maxval")
    pos += 1
    expected = height * width * k
    payload = buf[pos : pos + expected]
    if len(payload) < expected:
        raise ImageFormatError(f"truncated payload: expected {expected} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, k).copy()


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load a P5/P6 file as an ``(m, n, k)`` float image with values ``byte / 255``."""
    raw = decode_netpbm(Path(path).read_bytes())
    return raw.astype(np.float64) / 255.0


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Load a P5 mask (bytes 0 or 255) as a boolean ``(m, n)`` array."""
    raw = decode_netpbm(Path(path).read_bytes())
    if raw.shape[2] != 1:
        raise ImageFormatError("mask files must be P5 (single channel)")
    plane = raw[:, :, 0]
    if not np.isin(plane, (0, 255)).all():
        raise ImageFormatError("mask bytes must be 0 or 255")
    return plane == 255


def quantize(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to bytes with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_netpbm(raw: np.ndarray) -> bytes:
    if raw.ndim == 2:
        raw = raw[:, :, None]
    m, n, k = raw.shape
    magic = {1: b"P5", 3: b"P6"}.get(k)
    if magic is None:
        raise DimensionError(f"cannot encode {k} channels")
    header = magic + b"\n%d %d\n255\n" % (n, m)
    return header + np.ascontiguousarray(raw, dtype=np.uint8).tobytes()


def save_image(img, path: str | os.PathLike) -> None:
    """Write an image as P5 (k=1) or P6 (k=3); boolean masks are written as P5 {0, 255}."""
    arr = np.asarray(img)
    if arr.dtype == bool:
        save_mask(arr, path)
        return
    Path(path).write_bytes(encode_netpbm(quantize(as_image(arr))))


def save_mask(mask, path: str | os.PathLike) -> None:
    bits = as_mask(mask)
    Path(path).write_bytes(encode_netpbm(np.where(bits, 255, 0).astype(np.uint8)))


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    """Return the central ``size x size`` window of ``img``."""
    m, n = img.shape[:2]
    if size <= 0 or size > min(m, n):
        raise DimensionError(f"crop size {size} does not fit a {m}x{n} image")
    top = (m - size) // 2
    left = (n - size) // 2
    return img[top : top + size, left : left + size].copy()
