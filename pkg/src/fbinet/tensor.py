"""Dense float32 tensor primitives with fixed, documented summation orders.

Everything here is a pure function over numpy float32 arrays.  Because f32
addition is not associative, each reduction pins its accumulation order so
that repeated runs (and golden files derived from them) are bit-identical:

* ``conv2d``          accumulates ``bias`` first, then terms in
                      (in_channel, kernel_row, kernel_col) order.
* ``conv2d_transpose_flipped``
                      accumulates terms in (out_channel, kernel_row,
                      kernel_col) order into a zero buffer.
* ``affine``          sums products in ascending input-index order, then
                      adds the bias.
* ``maxpool2d``       breaks ties by the first maximum in row-major window
                      order.

Activations live here too (``relu``, ``softmax``) so the layer runtimes
have a single numerics module to lean on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

Shape = tuple[int, ...]

_F32 = np.float32
_ZERO = np.float32(0.0)


def tensor(values, shape: Shape | None = None) -> np.ndarray:
    """Build a validated float32 tensor.

    Casts ``values`` to a C-contiguous float32 array (reshaped to ``shape``
    when given) and rejects ranks outside 1..4, empty extents, and
    non-finite entries.
    """
    arr = np.asarray(values, dtype=_F32)
    if shape is not None:
        arr = arr.reshape(shape)
    if arr.ndim < 1 or arr.ndim > 4:
        raise ShapeError(f"tensor rank must be 1..4, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor extents must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor construction rejects non-finite values")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class ConvGeometry:
    """Kernel/stride/zero-padding triple for a 2-D convolution."""

    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        if kh < 1 or kw < 1:
            raise ShapeError(f"kernel extents must be >= 1, got {self.kernel}")
        if sh < 1 or sw < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if ph < 0 or pw < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")

    def out_hw(self, in_hw: tuple[int, int]) -> tuple[int, int]:
        """Output spatial extents; (H+2p-k) must divide the stride exactly."""
        out = []
        for extent, k, s, p in zip(in_hw, self.kernel, self.stride, self.padding):
            span = extent + 2 * p - k
            if span < 0 or span % s != 0:
                raise ShapeError(
                    f"non-integral output extent for input {in_hw} with "
                    f"kernel={self.kernel} stride={self.stride} padding={self.padding}"
                )
            out.append(span // s + 1)
        return (out[0], out[1])


def _pad2d(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw)))


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    geom: ConvGeometry,
) -> np.ndarray:
    """Direct 2-D cross-correlation over a [C_in, H, W] tensor.

    ``out[o, y, x] = bias[o] + sum_{i,u,v} x[i, y*sh+u-ph, x*sw+v-pw] *
    weight[o, i, u, v]`` with out-of-bounds reads as zero.  The accumulator
    starts at the bias and receives the (i, u, v) terms in exactly that
    nesting order, one f32 multiply-add per term.
    """
    if x.ndim != 3 or weight.ndim != 4 or bias.ndim != 1:
        raise ShapeError(
            f"conv2d expects input rank 3, weight rank 4, bias rank 1; "
            f"got {x.ndim}/{weight.ndim}/{bias.ndim}"
        )
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[0]}, weight wants {c_in}"
        )
    if (kh, kw) != geom.kernel:
        raise ShapeError(
            f"weight kernel {(kh, kw)} does not match geometry kernel {geom.kernel}"
        )
    if bias.shape[0] != c_out:
        raise ShapeError(f"bias length {bias.shape[0]} != out channels {c_out}")
    h_out, w_out = geom.out_hw(x.shape[1:])
    sh, sw = geom.stride
    xp = _pad2d(x, *geom.padding)

    out = np.empty((c_out, h_out, w_out), dtype=_F32)
    out[:] = bias[:, None, None]
    for i in range(c_in):
        plane = xp[i]
        for u in range(kh):
            rows = plane[u : u + sh * (h_out - 1) + 1 : sh]
            for v in range(kw):
                win = rows[:, v : v + sw * (w_out - 1) + 1 : sw]
                out += weight[:, i, u, v][:, None, None] * win[None, :, :]
    return out


def conv2d_transpose_flipped(
    backward: np.ndarray,
    weight: np.ndarray,
    geom: ConvGeometry,
    out_shape: Shape,
) -> np.ndarray:
    """Exact linear adjoint of the bias-free ``conv2d`` map.

    Scatter-accumulates every backward entry across its receptive field:
    ``out[i, y, x] = sum backward[o, y', x'] * weight[o, i, u, v]`` over all
    (o, u, v, y', x') with ``y = y'*sh+u-ph`` and ``x = x'*sw+v-pw`` inside
    the output.  Terms accumulate in (o, u, v) order.
    """
    if backward.ndim != 3 or weight.ndim != 4:
        raise ShapeError(
            f"transpose expects backward rank 3 and weight rank 4; "
            f"got {backward.ndim}/{weight.ndim}"
        )
    if len(out_shape) != 3:
        raise ShapeError(f"out_shape must be [C,H,W], got {out_shape}")
    c_out, c_in, kh, kw = weight.shape
    c, h, w = out_shape
    if c != c_in:
        raise ShapeError(f"out_shape channels {c} != weight in-channels {c_in}")
    h_out, w_out = geom.out_hw((h, w))
    if backward.shape != (c_out, h_out, w_out):
        raise ShapeError(
            f"backward shape {backward.shape} does not match conv output "
            f"{(c_out, h_out, w_out)} for out_shape {out_shape}"
        )
    sh, sw = geom.stride
    ph, pw = geom.padding

    padded = np.zeros((c_in, h + 2 * ph, w + 2 * pw), dtype=_F32)
    for o in range(c_out):
        plane = backward[o]
        for u in range(kh):
            rows = padded[:, u : u + sh * (h_out - 1) + 1 : sh]
            for v in range(kw):
                rows[:, :, v : v + sw * (w_out - 1) + 1 : sw] += (
                    weight[o, :, u, v][:, None, None] * plane[None, :, :]
                )
    if ph == 0 and pw == 0:
        return padded
    return padded[:, ph : ph + h, pw : pw + w].copy()


def maxpool2d(
    x: np.ndarray,
    kernel: tuple[int, int],
    stride: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Max-pool a [C, H, W] tensor; returns (pooled, switches).

    ``switches[c, y, x]`` is the flat ``h*W + w`` index into channel c's
    input plane of the first maximal entry, scanning the window in
    row-major order (deterministic tie-break).
    """
    if x.ndim != 3:
        raise ShapeError(f"maxpool2d expects rank 3, got {x.ndim}")
    kh, kw = kernel
    sh, sw = stride
    geom = ConvGeometry(kernel=kernel, stride=stride)
    c, h, w = x.shape
    h_out, w_out = geom.out_hw((h, w))

    s0, s1, s2 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(c, h_out, w_out, kh, kw),
        strides=(s0, s1 * sh, s2 * sw, s1, s2),
        writeable=False,
    )
    flat = windows.reshape(c, h_out, w_out, kh * kw)
    arg = flat.argmax(axis=3)
    pooled = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]

    wy, wx = arg // kw, arg % kw
    oy = (np.arange(h_out) * sh)[None, :, None]
    ox = (np.arange(w_out) * sw)[None, None, :]
    switches = ((oy + wy) * w + (ox + wx)).astype(np.int64)
    return np.ascontiguousarray(pooled), switches


def affine(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``W x + b`` for a [out, in] matrix, products summed in input-index order."""
    if weight.ndim != 2 or x.ndim != 1 or bias.ndim != 1:
        raise ShapeError(
            f"affine expects W rank 2, b rank 1, x rank 1; "
            f"got {weight.ndim}/{bias.ndim}/{x.ndim}"
        )
    n_out, n_in = weight.shape
    if x.shape[0] != n_in:
        raise ShapeError(f"affine input length {x.shape[0]} != {n_in}")
    if bias.shape[0] != n_out:
        raise ShapeError(f"affine bias length {bias.shape[0]} != {n_out}")
    # Contiguous transpose once, so the j-loop streams rows instead of
    # striding down columns.
    wt = np.ascontiguousarray(weight.T)
    acc = np.zeros(n_out, dtype=_F32)
    for j in range(n_in):
        acc += wt[j] * x[j]
    return acc + bias


def matvec_t(weight: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``W^T y`` for a [out, in] matrix, summed in ascending output-index order."""
    if weight.ndim != 2 or y.ndim != 1:
        raise ShapeError(f"matvec_t expects W rank 2, y rank 1; got {weight.ndim}/{y.ndim}")
    n_out, n_in = weight.shape
    if y.shape[0] != n_out:
        raise ShapeError(f"matvec_t vector length {y.shape[0]} != {n_out}")
    acc = np.zeros(n_in, dtype=_F32)
    for i in range(n_out):
        acc += weight[i] * y[i]
    return acc


def relu(x: np.ndarray) -> np.ndarray:
    """Pointwise max(0, x)."""
    return np.maximum(x, _ZERO)


def softmax(x: np.ndarray) -> np.ndarray:
    """Max-shifted softmax over a rank-1 vector."""
    if x.ndim != 1 or x.shape[0] < 1:
        raise ShapeError("softmax expects a non-empty rank-1 vector")
    e = np.exp(x - x.max())
    return e / e.sum(dtype=_F32)
