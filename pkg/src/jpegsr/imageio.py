"""Grayscale image file I/O: binary PGM (P5) and PNG.

All images are numpy uint8 arrays of shape (height, width). Color inputs
are reduced to luminance on load.
"""

import os

import numpy as np
from PIL import Image

from .metrics import to_luma


def to_unit(plane):
    """uint8 plane to float64 values in [0, 1]."""
    return np.asarray(plane, dtype=np.float64) / 255.0


def from_unit(plane01):
    """[0, 1] float plane to uint8, clamped, rounding halves up."""
    p = np.asarray(plane01, dtype=np.float64)
    return np.clip(np.floor(p * 255.0 + 0.5), 0, 255).astype(np.uint8)


def read_image(path):
    """Load an image as a uint8 luma plane.

    PGM files are parsed directly; everything else goes through Pillow.
    RGB(A) inputs are converted with the BT.601 studio-swing luma transform.
    Returns (plane, was_color).
    """
    path = os.fspath(path)
    if path.lower().endswith((".pgm",)):
        return _read_pgm(path), False
    img = Image.open(path)
    if img.mode in ("L", "I;16", "I"):
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
        return arr, False
    if img.mode in ("1", "P", "LA"):
        return np.asarray(img.convert("L"), dtype=np.uint8), False
    rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return to_luma(rgb), True


def write_image(path, plane):
    """Write a uint8 luma plane as PGM (by extension) or PNG."""
    path = os.fspath(path)
    plane = np.ascontiguousarray(plane, dtype=np.uint8)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {plane.shape}")
    if path.lower().endswith(".pgm"):
        _write_pgm(path, plane)
    else:
        Image.fromarray(plane, mode="L").save(path)


def _read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    # header: magic, width, height, maxval; '#' starts a comment to end of line
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = (int(v) for v in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raster.reshape(height, width).copy()


def _write_pgm(path, plane):
    h, w = plane.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(plane.tobytes())
