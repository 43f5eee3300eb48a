"""Image files: 8-bit binary PGM (P5) and the lossless ``SPF1`` float format.

SPF1 layout: an ASCII header line ``SPF1 <width> <height>\\n`` followed by
``width * height`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["read_pgm", "write_pgm", "read_spf", "write_spf", "FormatError"]


class FormatError(ValueError):
    pass


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.
    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last one."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:i].decode("ascii"))
    return tokens, i + 1


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PGM (P5) file into a float64 ``(height, width)`` array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
    width, height, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    npix = width * height
    if len(data) - offset < npix * np.dtype(dtype).itemsize:
        raise FormatError(f"{path}: pixel data truncated")
    raw = np.frombuffer(data, dtype=dtype, count=npix, offset=offset)
    img = raw.reshape(height, width).astype(np.float64)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def write_pgm(path: str | os.PathLike, image) -> None:
    """Write ``image`` as 8-bit P5, clamping to ``[0, 255]`` and rounding."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    pix = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    height, width = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def write_spf(path: str | os.PathLike, image) -> None:
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("SPF1 images must be 2-D")
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"SPF1 {width} {height}\n".encode("ascii"))
        fh.write(img.astype("<f8").tobytes(order="C"))


def read_spf(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"\n")
    header = data[:end].decode("ascii", errors="replace").split() if end >= 0 else []
    if len(header) != 3 or header[0] != "SPF1":
        raise FormatError(f"{path}: missing SPF1 header")
    width, height = int(header[1]), int(header[2])
    payload = data[end + 1 :]
    if len(payload) != 8 * width * height:
        raise FormatError(
            f"{path}: expected {8 * width * height} data bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(height, width).astype(np.float64)
