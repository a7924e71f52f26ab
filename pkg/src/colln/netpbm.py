"""Binary netpbm helpers: P6 (RGB) input and P5 (grayscale) output.

The engine deliberately speaks only these codec-free formats; resizing and
real image codecs live in the exporter tool.
"""

from __future__ import annotations

import numpy as np

from .errors import ImageFormatError


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode a 2-D uint8 array as binary PGM (P5, maxval 255)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ImageFormatError(f"PGM needs a 2-D uint8 array, got {arr.dtype} {arr.shape}")
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Inverse of encode_pgm (used by tests and tooling)."""
    magic, rest = _take_token(data)
    if magic != b"P5":
        raise ImageFormatError("not a binary PGM (P5) stream")
    w, rest = _take_token(rest)
    h, rest = _take_token(rest)
    maxval, rest = _take_token(rest)
    return _read_raster(rest, int(w), int(h), int(maxval), channels=1).reshape(int(h), int(w))


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6, maxval 255) file as a [H, W, 3] uint8 array."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read image '{path}': {exc}") from exc
    magic, rest = _take_token(data)
    if magic != b"P6":
        raise ImageFormatError(f"'{path}' is not a binary PPM (P6) file")
    w, rest = _take_token(rest)
    h, rest = _take_token(rest)
    maxval, rest = _take_token(rest)
    return _read_raster(rest, int(w), int(h), int(maxval), channels=3).reshape(int(h), int(w), 3)


def write_ppm(path, pixels: np.ndarray) -> None:
    """Write a [H, W, 3] uint8 array as binary PPM (P6, maxval 255)."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ImageFormatError(f"PPM needs a [H, W, 3] uint8 array, got {arr.dtype} {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def _take_token(data: bytes) -> tuple[bytes, bytes]:
    """Pop one whitespace-delimited header token, honoring '#' comments."""
    i = 0
    while True:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
            continue
        break
    start = i
    while i < len(data) and not data[i:i + 1].isspace():
        i += 1
    if start == i:
        raise ImageFormatError("truncated netpbm header")
    # exactly one whitespace byte separates the last header token from the raster
    return data[start:i], data[i + 1:]


def _read_raster(rest: bytes, w: int, h: int, maxval: int, channels: int) -> np.ndarray:
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 supported, got {maxval}")
    if w < 1 or h < 1:
        raise ImageFormatError(f"degenerate image size {w}x{h}")
    need = w * h * channels
    if len(rest) < need:
        raise ImageFormatError(f"raster truncated: need {need} bytes, have {len(rest)}")
    return np.frombuffer(rest[:need], dtype=np.uint8).copy()
