"""Forward-backward saliency: class-probed adjoint traversal gated by forward activations.

The backward walk starts from a class probe at the pre-softmax scores and
applies, per layer, the loose adjoint of the forward operation.  After every
weighted adjoint the signal is masked against the forward activation at that
representation (entries whose forward*backward product does not exceed the
threshold are dropped), then passed through ReLU when the representation was
ReLU-produced.  Raw pixels are never masked.  Max-pool steps replicate each
backward value across its pooling window (averaging where windows overlap)
and take an entrywise min with the forward pre-pool activation.  At the
flatten boundary only the strongest backward feature maps are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .model import ActivationTrace, Architecture, WeightArchive
from .tensor import ConvGeometry, Shape, conv2d_transpose_flipped, matvec_t, relu

_F32 = np.float32

OpLog = list[dict]


@dataclass(frozen=True)
class FbiConfig:
    """Backward-pass knobs.

    tau: masking threshold on forward*backward products (>= 0).
    top_fraction: fraction of backward feature maps kept at the flatten
        boundary, in (0, 1].
    bias_adjoint: subtract the conv bias before the flipped-filter
        transpose; turning it off recovers the plain DeconvNet step.
    """

    tau: float = 10.0
    top_fraction: float = 0.5
    bias_adjoint: bool = True

    def __post_init__(self):
        if not (self.tau >= 0.0 and math.isfinite(self.tau)):
            raise ValidationError(f"tau must be finite and >= 0, got {self.tau}")
        if not (0.0 < self.top_fraction <= 1.0):
            raise ValidationError(f"top_fraction must be in (0, 1], got {self.top_fraction}")


@dataclass
class SaliencyMap:
    """Signed input-shaped attribution plus its binary support."""

    values: np.ndarray
    method: str
    class_index: int
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        self.support = (self.values != 0).astype(np.uint8)


def softmax_adjoint(z_last: np.ndarray, class_index: int) -> np.ndarray:
    """Class probe at the pre-softmax scores: max(z) at the class, min(z) elsewhere."""
    if z_last.ndim != 1:
        raise ShapeError("softmax_adjoint expects a rank-1 score vector")
    if not 0 <= class_index < z_last.shape[0]:
        raise ValidationError(
            f"class index {class_index} out of range for {z_last.shape[0]} classes"
        )
    out = np.full_like(z_last, z_last.min())
    out[class_index] = z_last.max()
    return out


def relu_adjoint(backward: np.ndarray) -> np.ndarray:
    """The ReLU is its own adjoint."""
    return relu(backward)


def dense_adjoint(weight: np.ndarray, bias: np.ndarray, z_hat: np.ndarray) -> np.ndarray:
    """``W^T (z_hat - b)`` for a [out, in] dense layer."""
    if bias.shape != z_hat.shape:
        raise ShapeError(f"bias shape {bias.shape} != backward shape {z_hat.shape}")
    return matvec_t(weight, z_hat - bias)


def fb_mask(a: np.ndarray, a_hat: np.ndarray, tau: float) -> np.ndarray:
    """Keep backward entries whose product with the forward activation exceeds tau.

    Strictly greater: tau = 0 still drops entries whose product is exactly
    zero, which makes it a meaningful no-threshold setting on nonnegative
    activations.
    """
    if a.shape != a_hat.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {a_hat.shape}")
    return np.where(a * a_hat > _F32(tau), a_hat, _F32(0.0))


def flatten_adjoint(a_hat: np.ndarray, target: Shape) -> np.ndarray:
    """Row-major reshape of a flat backward vector back to [C, H, W]."""
    if a_hat.ndim != 1:
        raise ShapeError("flatten_adjoint expects a rank-1 backward vector")
    n = 1
    for d in target:
        n *= d
    if a_hat.shape[0] != n:
        raise ShapeError(f"length {a_hat.shape[0]} does not reshape to {target}")
    return a_hat.reshape(target)


def select_top_maps(a_hat: np.ndarray, top_fraction: float) -> np.ndarray:
    """Zero all but the ceil(fraction*C) feature maps with largest total activation.

    The contribution of a map is the plain sum of its entries; ties keep the
    lower channel index.
    """
    if not (0.0 < top_fraction <= 1.0):
        raise ValidationError(f"top_fraction must be in (0, 1], got {top_fraction}")
    if a_hat.ndim != 3:
        raise ShapeError("select_top_maps expects a [C, H, W] tensor")
    c = a_hat.shape[0]
    k = min(c, math.ceil(top_fraction * c))
    totals = a_hat.reshape(c, -1).sum(axis=1)
    # Stable sort on the negated totals keeps lower indices first among ties.
    keep = np.sort(np.argsort(-totals, kind="stable")[:k])
    out = np.zeros_like(a_hat)
    out[keep] = a_hat[keep]
    return out


def _replicated_mean(
    a_hat_pooled: np.ndarray,
    kernel: tuple[int, int],
    stride: tuple[int, int],
    out_hw: tuple[int, int],
) -> np.ndarray:
    """Copy each pooled backward value across its window; average overlaps."""
    c, hp, wp = a_hat_pooled.shape
    kh, kw = kernel
    sh, sw = stride
    h, w = out_hw
    total = np.zeros((c, h, w), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.int64)
    for u in range(kh):
        rows = slice(u, u + sh * (hp - 1) + 1, sh)
        for v in range(kw):
            cols = slice(v, v + sw * (wp - 1) + 1, sw)
            total[:, rows, cols] += a_hat_pooled
            count[rows, cols] += 1
    filled = count > 0
    mean = np.zeros((c, h, w), dtype=np.float64)
    mean[:, filled] = total[:, filled] / count[filled]
    return mean.astype(_F32)


def unpool_adjoint(
    pool_input: np.ndarray,
    a_hat_pooled: np.ndarray,
    kernel: tuple[int, int],
    stride: tuple[int, int],
) -> np.ndarray:
    """Replicate the pooled backward map across windows, then min with the pool input.

    Positions whose replicated backward value is exactly zero (including
    positions no window covers) stay zero, so zero backward flow cannot leak
    a negative forward activation through the min.
    """
    if pool_input.ndim != 3 or a_hat_pooled.ndim != 3:
        raise ShapeError("unpool_adjoint expects [C, H, W] tensors")
    geom = ConvGeometry(kernel=kernel, stride=stride)
    expect = geom.out_hw(pool_input.shape[1:])
    if a_hat_pooled.shape != (pool_input.shape[0], *expect):
        raise ShapeError(
            f"pooled backward shape {a_hat_pooled.shape} does not match "
            f"{(pool_input.shape[0], *expect)} for pool input {pool_input.shape}"
        )
    replicated = _replicated_mean(a_hat_pooled, kernel, stride, pool_input.shape[1:])
    out = np.minimum(pool_input, replicated)
    return np.where(replicated == 0, _F32(0.0), out)


def deconv_adjoint(
    weight: np.ndarray,
    bias: np.ndarray,
    z_hat: np.ndarray,
    geom: ConvGeometry,
    out_shape: Shape,
    subtract_bias: bool = True,
) -> np.ndarray:
    """Flipped-filter transpose of the conv map, after per-channel bias subtraction.

    Mirrors the dense adjoint's (z_hat - b); with ``subtract_bias=False`` this
    is exactly ``conv2d_transpose_flipped``.
    """
    if z_hat.ndim != 3:
        raise ShapeError("deconv_adjoint expects a [C_out, H', W'] backward tensor")
    if bias.shape != (z_hat.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != backward channels {z_hat.shape[0]}")
    if subtract_bias:
        z_hat = z_hat - bias[:, None, None]
    return conv2d_transpose_flipped(z_hat, weight, geom, out_shape)


def _pixel_like(arch: Architecture, rep_index: int) -> bool:
    """True when representation ``rep_index`` is the raw input, possibly reshaped.

    Flatten moves values without transforming them, so a flatten chain on the
    input still holds raw pixels and must not be masked or map-filtered.
    """
    return all(layer.kind == "flatten" for layer in arch.layers[:rep_index])


def explain_fbi(
    trace: ActivationTrace,
    arch: Architecture,
    weights: WeightArchive,
    class_index: int,
    cfg: FbiConfig | None = None,
    op_log: OpLog | None = None,
) -> SaliencyMap:
    """Walk the network backwards from the class probe down to the pixels.

    Per layer, from last to first: dense/conv apply their weight adjoint,
    then the forward-backward mask at the layer's input representation
    (skipped on raw pixels), then ReLU when that representation is
    ReLU-produced; flatten reshapes and keeps only the top backward feature
    maps; maxpool replicates-and-mins against the recorded pool input.
    """
    cfg = cfg or FbiConfig()
    if len(trace.layers) != len(arch.layers):
        raise ValidationError(
            f"trace has {len(trace.layers)} layers, architecture has {len(arch.layers)}"
        )

    def log(op: str, layer: str, **params):
        if op_log is not None:
            op_log.append({"op": op, "layer": layer, **params})

    signal = softmax_adjoint(trace.layers[-1].z, class_index)
    log("softmax_adjoint", arch.layers[-1].name, class_index=class_index)

    for idx in range(len(arch.layers) - 1, -1, -1):
        layer = arch.layers[idx]
        rec = trace.layers[idx]
        if rec.a.shape != tuple(arch.rep_shapes[idx + 1]):
            raise ValidationError(
                f"trace/architecture mismatch at layer '{layer.name}': "
                f"{rec.a.shape} vs {arch.rep_shapes[idx + 1]}"
            )
        below_relu = idx > 0 and arch.layers[idx - 1].activation == "relu"
        raw_pixels = _pixel_like(arch, idx)

        if layer.kind == "dense":
            # A fully-masked signal carries no information; skipping the
            # adjoint keeps the bias term from resurrecting it, so high tau
            # yields an empty support and sparsity stays monotone in tau.
            if signal.any():
                signal = dense_adjoint(
                    weights[f"{layer.name}.weight"], weights[f"{layer.name}.bias"], signal
                )
            else:
                signal = np.zeros(arch.rep_shapes[idx], dtype=_F32)
            log("dense_adjoint", layer.name, bias_subtracted=True)
            if not raw_pixels:
                signal = fb_mask(trace.rep(idx), signal, cfg.tau)
                log("fb_mask", layer.name, tau=cfg.tau)
                if below_relu:
                    signal = relu_adjoint(signal)
                    log("relu_adjoint", layer.name)
        elif layer.kind == "conv2d":
            if signal.any():
                signal = deconv_adjoint(
                    weights[f"{layer.name}.weight"],
                    weights[f"{layer.name}.bias"],
                    signal,
                    layer.geometry,
                    arch.rep_shapes[idx],
                    subtract_bias=cfg.bias_adjoint,
                )
            else:
                signal = np.zeros(arch.rep_shapes[idx], dtype=_F32)
            log("deconv_adjoint", layer.name, bias_subtracted=cfg.bias_adjoint)
            if not raw_pixels:
                signal = fb_mask(trace.rep(idx), signal, cfg.tau)
                log("fb_mask", layer.name, tau=cfg.tau)
                if below_relu:
                    signal = relu_adjoint(signal)
                    log("relu_adjoint", layer.name)
        elif layer.kind == "flatten":
            signal = flatten_adjoint(signal, arch.rep_shapes[idx])
            log("flatten_adjoint", layer.name)
            if not raw_pixels:
                signal = select_top_maps(signal, cfg.top_fraction)
                log("select_top_maps", layer.name, top_fraction=cfg.top_fraction)
        else:  # maxpool
            signal = unpool_adjoint(rec.pool_input, signal, layer.kernel, layer.stride)
            log("unpool_adjoint", layer.name, rule="replicate_min")

    return SaliencyMap(values=signal, method="fbi", class_index=class_index)
