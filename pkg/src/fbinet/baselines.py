"""Gradient-style backward engines: plain backprop, guided backprop, DeconvNet.

One traversal, parametrized by the rule applied at each ReLU site:

* ``plain``     pass the signal where the forward pre-activation was positive
                (the true gradient of the pre-softmax class score).
* ``deconvnet`` apply ReLU to the backward signal itself.
* ``guided``    both conditions.

Max-pool routes the signal through the switches recorded during the forward
pass; convolutions backpropagate through the flipped-filter transpose with
no bias term.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .fbi import OpLog, SaliencyMap
from .model import ActivationTrace, Architecture, WeightArchive
from .tensor import conv2d_transpose_flipped, matvec_t, relu

RELU_RULES = ("plain", "guided", "deconvnet")


def unpool_switches(
    switches: np.ndarray,
    backward: np.ndarray,
    out_hw: tuple[int, int],
) -> np.ndarray:
    """Scatter-add each backward entry to its recorded argmax position."""
    c = backward.shape[0]
    h, w = out_hw
    out = np.zeros((c, h * w), dtype=np.float32)
    for ch in range(c):
        np.add.at(out[ch], switches[ch].reshape(-1), backward[ch].reshape(-1))
    return out.reshape(c, h, w)


def backward_pass(
    trace: ActivationTrace,
    arch: Architecture,
    weights: WeightArchive,
    class_index: int,
    rule: str,
    seed_scale: float = 1.0,
    op_log: OpLog | None = None,
) -> SaliencyMap:
    """Backpropagate the one-hot gradient of the pre-softmax class score."""
    if rule not in RELU_RULES:
        raise ValidationError(f"rule must be one of {RELU_RULES}, got {rule!r}")
    if len(trace.layers) != len(arch.layers):
        raise ValidationError(
            f"trace has {len(trace.layers)} layers, architecture has {len(arch.layers)}"
        )
    n_classes = trace.layers[-1].z.shape[0]
    if not 0 <= class_index < n_classes:
        raise ValidationError(f"class index {class_index} out of range for {n_classes} classes")

    def log(op: str, layer: str, **params):
        if op_log is not None:
            op_log.append({"op": op, "layer": layer, **params})

    g = np.zeros(n_classes, dtype=np.float32)
    g[class_index] = np.float32(seed_scale)
    log("onehot_seed", arch.layers[-1].name, class_index=class_index)

    for idx in range(len(arch.layers) - 1, -1, -1):
        layer = arch.layers[idx]
        rec = trace.layers[idx]
        if layer.kind == "dense":
            g = matvec_t(weights[f"{layer.name}.weight"], g)
            log("dense_backward", layer.name, bias_subtracted=False)
        elif layer.kind == "conv2d":
            g = conv2d_transpose_flipped(
                g, weights[f"{layer.name}.weight"], layer.geometry, arch.rep_shapes[idx]
            )
            log("conv_backward", layer.name, bias_subtracted=False)
        elif layer.kind == "flatten":
            g = g.reshape(arch.rep_shapes[idx])
            log("flatten_backward", layer.name)
        else:  # maxpool
            g = unpool_switches(rec.switches, g, arch.rep_shapes[idx][1:])
            log("unpool_switches", layer.name, rule="switches")

        if idx > 0 and arch.layers[idx - 1].activation == "relu":
            z_below = trace.layers[idx - 1].z
            log("relu_gate", arch.layers[idx - 1].name, rule=rule, incoming=g)
            if rule == "plain":
                g = g * (z_below > 0)
            elif rule == "deconvnet":
                g = relu(g)
            else:
                g = relu(g) * (z_below > 0)

    return SaliencyMap(values=g, method=rule, class_index=class_index)


def explain_guided(
    trace: ActivationTrace,
    arch: Architecture,
    weights: WeightArchive,
    class_index: int,
    op_log: OpLog | None = None,
) -> SaliencyMap:
    """Guided backpropagation saliency."""
    return backward_pass(trace, arch, weights, class_index, "guided", op_log=op_log)


def explain_deconvnet(
    trace: ActivationTrace,
    arch: Architecture,
    weights: WeightArchive,
    class_index: int,
    op_log: OpLog | None = None,
) -> SaliencyMap:
    """DeconvNet-style saliency with switch-based unpooling."""
    return backward_pass(trace, arch, weights, class_index, "deconvnet", op_log=op_log)
