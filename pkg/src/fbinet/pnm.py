"""Binary PGM/PPM decoding and encoding, preprocessing, and saliency rendering.

Only maxval-255 binary PNM (P5/P6) is supported; the canonical encoder
output is byte-stable so rendered images can serve as golden files.  All
rendering rounds half up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .fbi import SaliencyMap
from .tensor import Shape

_WHITESPACE = b" \t\n\r\x0b\x0c"

# ITU-R 601 luma weights for the overlay's base-image grayscale.
_LUMA = (0.299, 0.587, 0.114)


@dataclass
class ImageU8:
    """8-bit image; pixels are row-major interleaved, shape [height, width, channels]."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ShapeError(f"channels must be 1 or 3, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise ShapeError(f"image extents must be positive, got {self.width}x{self.height}")
        self.pixels = np.asarray(self.pixels, dtype=np.uint8).reshape(
            self.height, self.width, self.channels
        )


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


class _Scanner:
    """Header tokenizer: '#' comments count as whitespace up to end of line."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self) -> None:
        while self.pos < len(self.data):
            b = self.data[self.pos : self.pos + 1]
            if b in (b"#",):
                nl = self.data.find(b"\n", self.pos)
                self.pos = len(self.data) if nl < 0 else nl + 1
            elif b in _WHITESPACE:
                self.pos += 1
            else:
                return

    def next_int(self, what: str) -> int:
        self.skip_space()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            raise FormatError(f"expected integer for {what} at byte {start}")
        return int(self.data[start : self.pos])


def load_pnm(data: bytes) -> ImageU8:
    """Decode binary PGM (P5) or PPM (P6) with maxval 255."""
    if len(data) < 2:
        raise FormatError("not a PNM file: too short")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"bad magic {magic!r}: expected P5 or P6")
    channels = 1 if magic == b"P5" else 3

    sc = _Scanner(data)
    sc.pos = 2
    width = sc.next_int("width")
    height = sc.next_int("height")
    maxval = sc.next_int("maxval")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}: only 255 is supported")
    # Exactly one whitespace byte separates the header from the raster.
    if sc.pos >= len(data) or data[sc.pos : sc.pos + 1] not in _WHITESPACE:
        raise FormatError("missing whitespace byte between header and raster")
    sc.pos += 1

    n = width * height * channels
    raster = data[sc.pos : sc.pos + n]
    if len(raster) < n:
        raise FormatError(f"truncated raster: expected {n} bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return ImageU8(width=width, height=height, channels=channels, pixels=pixels.copy())


def save_pnm(img: ImageU8) -> bytes:
    """Canonical emission: magic, newline, 'W H', newline, '255', newline, raster."""
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n" + f"{img.width} {img.height}".encode() + b"\n255\n"
    return header + img.pixels.tobytes(order="C")


def preprocess(img: ImageU8, mean: np.ndarray, expected: Shape) -> np.ndarray:
    """Channel-first f32 tensor of (pixel - mean[channel]); sizes must match exactly."""
    if len(expected) != 3:
        raise ShapeError(f"expected shape must be [C,H,W], got {expected}")
    c, h, w = expected
    if img.channels != c or img.height != h or img.width != w:
        raise ShapeError(
            f"image is {img.channels}x{img.height}x{img.width} (CxHxW), "
            f"model expects {c}x{h}x{w}; this tool never resizes"
        )
    mean = np.asarray(mean, dtype=np.float32)
    if mean.shape != (c,):
        raise ShapeError(f"mean must have one value per channel ({c}), got shape {mean.shape}")
    chw = img.pixels.astype(np.float32).transpose(2, 0, 1)
    return np.ascontiguousarray(chw - mean[:, None, None])


def render_grayscale(s: SaliencyMap) -> ImageU8:
    """Self-normalized channel-max |saliency| as a single-channel image."""
    mags = np.abs(np.asarray(s.values, dtype=np.float64))
    if mags.ndim != 3:
        raise ShapeError(f"saliency values must be [C,H,W], got rank {mags.ndim}")
    plane = mags.max(axis=0)
    m = plane.max()
    if m == 0:
        out = np.zeros(plane.shape, dtype=np.uint8)
    else:
        out = _round_half_up(255.0 * plane / m).astype(np.uint8)
    return ImageU8(width=plane.shape[1], height=plane.shape[0], channels=1, pixels=out)


def render_overlay(s: SaliencyMap, base: ImageU8) -> ImageU8:
    """Red saliency over a dimmed grayscale base: R = 0.3 g + 0.7 saliency, G = B = 0.3 g."""
    gray = render_grayscale(s)
    if (base.height, base.width) != (gray.height, gray.width):
        raise ShapeError(
            f"base image {base.height}x{base.width} does not match saliency "
            f"{gray.height}x{gray.width}"
        )
    if base.channels == 3:
        rgb = base.pixels.astype(np.float64)
        g = _round_half_up(_LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] + _LUMA[2] * rgb[..., 2])
    else:
        g = base.pixels[..., 0].astype(np.float64)
    n = gray.pixels[..., 0].astype(np.float64) / 255.0
    red = np.clip(_round_half_up(0.3 * g + 0.7 * 255.0 * n), 0, 255)
    dim = _round_half_up(0.3 * g)
    out = np.stack([red, dim, dim], axis=-1).astype(np.uint8)
    return ImageU8(width=base.width, height=base.height, channels=3, pixels=out)
