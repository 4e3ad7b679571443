"""fbi-export command line: export, verify, to-ppm."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import models
from .convert import UnsupportedLayer, export_model
from .images import image_to_ppm
from .verify import verify_roundtrip


def parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return (int(h), int(w))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"size must look like 224x224, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbi-export",
                                     description="Bridge torch models to the fbinet engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="write arch.yaml + weights.fbiw + manifest.json")
    exp.add_argument("--model", required=True, choices=("tiny", "vgg16"))
    exp.add_argument("--out", required=True)
    exp.add_argument("--weights", default="random", choices=("random", "pretrained"),
                     help="vgg16 weight source (pretrained needs network/cache)")

    ver = sub.add_parser("verify", help="compare source and engine predictions")
    ver.add_argument("--dir", required=True, help="directory produced by export")
    ver.add_argument("--images", required=True, nargs="+", help="exact-size PPM images")
    ver.add_argument("--engine", default=None, help="path to the fbinet binary")

    ppm = sub.add_parser("to-ppm", help="convert a photo to an exact-size binary PPM")
    ppm.add_argument("input", help="photo path (anything PIL reads)")
    ppm.add_argument("--size", required=True, type=parse_size, help="HxW, e.g. 224x224")
    ppm.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    opts = build_parser().parse_args(argv)
    try:
        if opts.command == "export":
            model, shape, norm, labels, extras = models.resolve(opts.model, opts.weights)
            out = export_model(model, opts.model, shape, opts.out,
                               normalization=norm, labels=labels, extra_manifest=extras)
            print(f"exported {opts.model} to {out}")
        elif opts.command == "verify":
            report = verify_roundtrip(opts.dir, opts.images, engine=opts.engine)
            print(report.render())
        else:
            Path(opts.out).write_bytes(image_to_ppm(opts.input, opts.size))
            print(f"wrote {opts.out}")
        return 0
    except (UnsupportedLayer, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"fbi-export: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
