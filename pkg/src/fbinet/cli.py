"""Command-line surface: `fbinet predict` and `fbinet explain`.

Exit codes: 0 success, 2 load/validation/I-O failure, 3 class index out of
range.  Preprocessing is plain layout conversion (zero mean); models that
need mean subtraction carry it as an initial 1x1 conv layer, which is how
the exporter emits them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import explain_deconvnet, explain_guided
from .errors import FbinetError, ValidationError
from .fbi import FbiConfig, explain_fbi
from .model import load_architecture, load_weights, save_weights, validate, forward_trace
from .pnm import load_pnm, preprocess, render_grayscale, render_overlay, save_pnm

METHODS = ("fbi", "guided", "deconvnet")

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_BAD_CLASS = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbinet",
        description="Sequential-CNN inference and saliency explanations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--arch", required=True, help="architecture YAML path")
        p.add_argument("--weights", required=True, help="FBIW weight archive path")
        p.add_argument("--image", required=True, help="input image (binary PGM/PPM)")

    predict = sub.add_parser("predict", help="print the top-5 classes")
    common(predict)

    explain = sub.add_parser("explain", help="write a saliency image for one class")
    common(explain)
    explain.add_argument("--method", choices=METHODS, default="fbi")
    explain.add_argument("--tau", type=float, default=10.0,
                         help="forward-backward masking threshold (fbi only)")
    explain.add_argument("--top-frac", type=float, default=0.5, dest="top_frac",
                         help="fraction of backward feature maps kept (fbi only)")
    explain.add_argument("--class", type=int, default=None, dest="class_index",
                         help="class to explain (default: predicted top class)")
    explain.add_argument("--out", required=True, help="output image path (PGM, or PPM with --overlay)")
    explain.add_argument("--overlay", action="store_true",
                         help="render saliency in red over the dimmed input")
    explain.add_argument("--no-bias-adjoint", action="store_true", dest="no_bias_adjoint",
                         help="skip conv bias subtraction in the fbi backward step")
    explain.add_argument("--raw-out", default=None, dest="raw_out",
                         help="also write the raw saliency tensor as an FBIW archive")
    return parser


def _load_inputs(opts):
    arch = load_architecture(Path(opts.arch).read_bytes())
    weights = load_weights(Path(opts.weights).read_bytes())
    validate(arch, weights)
    img = load_pnm(Path(opts.image).read_bytes())
    mean = np.zeros(arch.input_shape[0], dtype=np.float32)
    x = preprocess(img, mean, arch.input_shape)
    return arch, weights, img, x


def _cmd_predict(opts) -> int:
    arch, weights, _, x = _load_inputs(opts)
    _, pred = forward_trace(arch, weights, x)
    probs = pred.probabilities
    order = np.argsort(-probs, kind="stable")[: min(5, probs.shape[0])]
    for i in order:
        print(f"{int(i)}\t{probs[i]:.6f}")
    return EXIT_OK


def _cmd_explain(opts) -> int:
    if opts.tau < 0:
        raise ValidationError(f"--tau must be >= 0, got {opts.tau}")
    if not (0.0 < opts.top_frac <= 1.0):
        raise ValidationError(f"--top-frac must be in (0, 1], got {opts.top_frac}")
    arch, weights, img, x = _load_inputs(opts)
    trace, pred = forward_trace(arch, weights, x)

    n_classes = pred.probabilities.shape[0]
    class_index = pred.top_class if opts.class_index is None else opts.class_index
    if not 0 <= class_index < n_classes:
        print(f"fbinet: class {class_index} out of range (model has {n_classes} classes)",
              file=sys.stderr)
        return EXIT_BAD_CLASS

    if opts.method == "fbi":
        cfg = FbiConfig(tau=opts.tau, top_fraction=opts.top_frac,
                        bias_adjoint=not opts.no_bias_adjoint)
        saliency = explain_fbi(trace, arch, weights, class_index, cfg)
    elif opts.method == "guided":
        saliency = explain_guided(trace, arch, weights, class_index)
    else:
        saliency = explain_deconvnet(trace, arch, weights, class_index)

    rendered = render_overlay(saliency, img) if opts.overlay else render_grayscale(saliency)
    Path(opts.out).write_bytes(save_pnm(rendered))
    if opts.raw_out:
        Path(opts.raw_out).write_bytes(save_weights({"saliency": saliency.values}))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    opts = build_parser().parse_args(argv)
    try:
        if opts.command == "predict":
            return _cmd_predict(opts)
        return _cmd_explain(opts)
    except (FbinetError, OSError) as exc:
        print(f"fbinet: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
