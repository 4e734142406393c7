"""Single-channel image files: 8/16-bit PGM and a raw float32 grid.

Raw float32 layout (little-endian)::

    bytes 0-7    magic  b"CSIMF32\\0"
    bytes 8-11   width  uint32
    bytes 12-15  height uint32
    bytes 16-    width * height float32 values, row-major

PGM files are binary Netpbm (``P5``); 16-bit samples are big-endian as the
format requires.  Integer output clips to ``[0, maxval]`` and rounds half to
even (``numpy.rint``).
"""

from __future__ import annotations

import os
import re
import struct

import numpy as np

from .errors import ImageIOError

__all__ = ["RAW_MAGIC", "load_image", "save_image", "read_pgm", "write_pgm"]

RAW_MAGIC = b"CSIMF32\x00"
_RAW_HEADER = struct.Struct("<8sII")
MAX_PIXELS = 1 << 30

_PGM_HEADER = re.compile(rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def _check_dims(width: int, height: int, path) -> None:
    if width < 1 or height < 1:
        raise ImageIOError(f"{path}: invalid dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise ImageIOError(f"{path}: dimensions {width}x{height} exceed {MAX_PIXELS} pixels")


def read_pgm(data: bytes, path="<bytes>") -> np.ndarray:
    m = _PGM_HEADER.match(data)
    if m is None:
        raise ImageIOError(f"{path}: malformed PGM header")
    width, height, maxval = (int(g) for g in m.groups())
    _check_dims(width, height, path)
    if not 0 < maxval < 65536:
        raise ImageIOError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = data[m.end() :]
    expected = width * height * dtype.itemsize
    if len(body) < expected:
        raise ImageIOError(f"{path}: truncated PGM data ({len(body)} of {expected} bytes)")
    return np.frombuffer(body[:expected], dtype=dtype).reshape(height, width).astype(float)


def write_pgm(img: np.ndarray, bit_depth: int) -> bytes:
    maxval = (1 << bit_depth) - 1
    h, w = img.shape
    dtype = ">u2" if bit_depth == 16 else "u1"
    values = np.rint(np.clip(img, 0, maxval)).astype(dtype)
    return b"P5\n%d %d\n%d\n" % (w, h, maxval) + values.tobytes()


def load_image(path) -> np.ndarray:
    """Read a PGM or raw float32 image as a float64 ``(height, width)`` array."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc.strerror or exc}") from exc
    if data.startswith(RAW_MAGIC):
        if len(data) < _RAW_HEADER.size:
            raise ImageIOError(f"{path}: truncated raw header")
        _, width, height = _RAW_HEADER.unpack_from(data)
        _check_dims(width, height, path)
        expected = _RAW_HEADER.size + 4 * width * height
        if len(data) != expected:
            raise ImageIOError(f"{path}: raw file is {len(data)} bytes, header implies {expected}")
        return np.frombuffer(data, dtype="<f4", offset=_RAW_HEADER.size).reshape(height, width).astype(float)
    if data.startswith(b"P5"):
        return read_pgm(data, path)
    raise ImageIOError(f"{path}: unrecognised image format (expected PGM P5 or raw float32)")


def save_image(img, path, bit_depth: int = 32) -> None:
    """Write ``img`` as 8- or 16-bit PGM, or (``bit_depth=32``) raw float32."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ImageIOError(f"{path}: expected a non-empty 2-D image, got shape {arr.shape}")
    if bit_depth in (8, 16):
        payload = write_pgm(arr, bit_depth)
    elif bit_depth == 32:
        h, w = arr.shape
        payload = _RAW_HEADER.pack(RAW_MAGIC, w, h) + arr.astype("<f4").tobytes()
    else:
        raise ImageIOError(f"{path}: unsupported bit depth {bit_depth} (use 8, 16 or 32)")
    try:
        os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc.strerror or exc}") from exc
