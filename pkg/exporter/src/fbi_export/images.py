"""Photo conversion to the engine's exact-size PPM input."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .formats import write_ppm


def image_to_ppm(photo_path, size_hw: tuple[int, int]) -> bytes:
    """Decode a photo, bilinear-resize to exactly HxW, emit binary P6."""
    h, w = size_hw
    try:
        img = Image.open(photo_path)
        img.load()
    except Exception as exc:
        raise ValueError(f"unreadable input image {photo_path}: {exc}") from exc
    img = img.convert("RGB")
    if img.size != (w, h):
        img = img.resize((w, h), Image.BILINEAR)
    return write_ppm(np.asarray(img, dtype=np.uint8))


def read_ppm(data: bytes) -> np.ndarray:
    """Minimal binary-P6 reader (maxval 255) for round-trip verification."""
    if not data.startswith(b"P6"):
        raise ValueError("not a binary PPM")
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        fields.append(int(data[start:pos]))
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pos += 1
    raster = data[pos : pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise ValueError("truncated PPM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def load_ppm_file(path) -> np.ndarray:
    return read_ppm(Path(path).read_bytes())
