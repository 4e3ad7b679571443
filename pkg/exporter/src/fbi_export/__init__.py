"""fbi-export: bridge sequential torch models to the fbinet engine formats."""

from .convert import UnsupportedLayer, convert_model, export_model
from .images import image_to_ppm, read_ppm
from .verify import RoundtripReport, verify_roundtrip

__all__ = [
    "RoundtripReport",
    "UnsupportedLayer",
    "convert_model",
    "export_model",
    "image_to_ppm",
    "read_ppm",
    "verify_roundtrip",
]
