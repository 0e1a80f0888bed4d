"""Image persistence: 8-bit binary PGM (P5) plus a lossless float64 raw format.

PGM is the human-viewable export: images are unit-normalized and quantized
with round(255 * v). The raw format (magic ``GZIMG1``, uint32 LE width and
height, then row-major float64 LE samples) is the exact hand-off between
pipeline stages.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .render import normalize_unit
from .validation import as_image

RAW_MAGIC = b"GZIMG1"


def write_pgm(img, path) -> None:
    """Write a unit-normalized, 8-bit quantized copy of ``img`` as binary PGM."""
    img = as_image(img)
    data = np.rint(255.0 * normalize_unit(img)).astype(np.uint8)
    h, w = data.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        handle.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into floats in [0, 1] (values divided by maxval)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"image not found: {path}")
    blob = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(blob):
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if not (1 <= maxval <= 255):
        raise DataError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = blob[pos : pos + w * h]
    if len(pixels) != w * h:
        raise DataError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).astype(np.float64) / maxval


def write_raw(img, path) -> None:
    """Write the lossless GZIMG1 representation of ``img``."""
    img = as_image(img)
    h, w = img.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(RAW_MAGIC)
        handle.write(struct.pack("<II", w, h))
        handle.write(np.ascontiguousarray(img, dtype="<f8").tobytes())


def read_raw(path) -> np.ndarray:
    """Read a GZIMG1 file back into a float64 image, bit-exact."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"image not found: {path}")
    blob = path.read_bytes()
    if blob[: len(RAW_MAGIC)] != RAW_MAGIC:
        raise DataError(f"{path}: not a GZIMG1 file")
    header_end = len(RAW_MAGIC) + 8
    if len(blob) < header_end:
        raise DataError(f"{path}: truncated header")
    w, h = struct.unpack("<II", blob[len(RAW_MAGIC) : header_end])
    expected = header_end + 8 * w * h
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob[header_end:], dtype="<f8").reshape(h, w).astype(np.float64)
