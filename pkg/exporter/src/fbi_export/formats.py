"""Writers for the engine's on-disk formats.

Implemented from the format documentation, independently of the engine
codebase: the exporter talks to the engine only through files and its CLI.

FBIW (little-endian): magic `FBIW`, version u32 = 1, entry count u32; per
entry name_len u32, UTF-8 name, rank u32, rank x u32 dims, dtype u8
(0 = f32), row-major f32 payload.  No padding, no trailing bytes.
"""

from __future__ import annotations

import struct

import numpy as np
import yaml


def write_fbiw(entries: dict[str, np.ndarray]) -> bytes:
    """Serialize named f32 tensors in insertion order."""
    chunks = [b"FBIW", struct.pack("<II", 1, len(entries))]
    for name, arr in entries.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
        if not np.all(np.isfinite(a)):
            raise ValueError(f"entry '{name}' contains non-finite values")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(struct.pack("<B", 0))
        chunks.append(a.tobytes(order="C"))
    return b"".join(chunks)


def write_architecture(input_shape, layers: list[dict]) -> str:
    """Emit the architecture YAML document, keys in a stable order."""
    key_order = ["type", "name", "activation", "in_channels", "out_channels",
                 "kernel", "stride", "padding", "in", "out"]

    def ordered(layer):
        return {k: layer[k] for k in key_order if k in layer}

    doc = {"input_shape": list(input_shape), "layers": [ordered(l) for l in layers]}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def write_ppm(pixels: np.ndarray) -> bytes:
    """Binary P6, maxval 255; pixels are [H, W, 3] uint8."""
    h, w, c = pixels.shape
    if c != 3:
        raise ValueError(f"PPM needs 3 channels, got {c}")
    return b"P6\n" + f"{w} {h}".encode() + b"\n255\n" + pixels.astype(np.uint8).tobytes()
