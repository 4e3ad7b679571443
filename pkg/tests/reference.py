"""Independent oracles for the test suite.

Two families, deliberately separate from the production code paths:

* ``*_f32_scalar`` — naive scalar loops with float32 accumulators, following
  the documented summation orders literally.  Used for bit-exactness checks
  on tiny shapes.
* ``*_f64`` — vectorized double-precision implementations (different numpy
  formulation from production).  Used as tolerance oracles and for finite
  differences.
"""

from __future__ import annotations

import numpy as np

f32 = np.float32


# -- bit-exact scalar references ------------------------------------------------

def conv2d_f32_scalar(x, weight, bias, kernel, stride, padding):
    c_out, c_in, kh, kw = weight.shape
    _, h, w = x.shape
    sh, sw = stride
    ph, pw = padding
    h_out = (h + 2 * ph - kh) // sh + 1
    w_out = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((c_out, h_out, w_out), dtype=f32)
    for o in range(c_out):
        for y in range(h_out):
            for xx in range(w_out):
                acc = f32(bias[o])
                for i in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            yy = y * sh + u - ph
                            xv = xx * sw + v - pw
                            val = x[i, yy, xv] if 0 <= yy < h and 0 <= xv < w else f32(0.0)
                            acc = f32(acc + f32(val * weight[o, i, u, v]))
                out[o, y, xx] = acc
    return out


def conv2d_transpose_f32_scalar(backward, weight, stride, padding, out_shape):
    c_out, c_in, kh, kw = weight.shape
    _, hb, wb = backward.shape
    sh, sw = stride
    ph, pw = padding
    c, h, w = out_shape
    out = np.zeros((c, h, w), dtype=f32)
    for o in range(c_out):
        for u in range(kh):
            for v in range(kw):
                for yb in range(hb):
                    for xb in range(wb):
                        y = yb * sh + u - ph
                        x = xb * sw + v - pw
                        if 0 <= y < h and 0 <= x < w:
                            for i in range(c_in):
                                out[i, y, x] = f32(
                                    out[i, y, x] + f32(backward[o, yb, xb] * weight[o, i, u, v])
                                )
    return out


def affine_f32_scalar(weight, bias, x):
    n_out, n_in = weight.shape
    out = np.zeros(n_out, dtype=f32)
    for i in range(n_out):
        acc = f32(0.0)
        for j in range(n_in):
            acc = f32(acc + f32(weight[i, j] * x[j]))
        out[i] = f32(acc + bias[i])
    return out


def matvec_t_f32_scalar(weight, y):
    n_out, n_in = weight.shape
    out = np.zeros(n_in, dtype=f32)
    for j in range(n_in):
        acc = f32(0.0)
        for i in range(n_out):
            acc = f32(acc + f32(weight[i, j] * y[i]))
        out[j] = acc
    return out


# -- double-precision oracles ----------------------------------------------------

def conv2d_f64(x, weight, bias, kernel, stride, padding):
    x = x.astype(np.float64)
    weight = weight.astype(np.float64)
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    _, h, w = xp.shape
    h_out = (h - kh) // sh + 1
    w_out = (w - kw) // sw + 1
    patches = np.empty((x.shape[0], kh, kw, h_out, w_out), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            patches[:, u, v] = xp[:, u : u + sh * (h_out - 1) + 1 : sh,
                                  v : v + sw * (w_out - 1) + 1 : sw]
    out = np.einsum("oiuv,iuvyx->oyx", weight, patches)
    return out + bias.astype(np.float64)[:, None, None]


def maxpool2d_f64(x, kernel, stride):
    c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    h_out = (h - kh) // sh + 1
    w_out = (w - kw) // sw + 1
    out = np.empty((c, h_out, w_out), dtype=np.float64)
    for ch in range(c):
        for y in range(h_out):
            for xx in range(w_out):
                out[ch, y, xx] = x[ch, y * sh : y * sh + kh, xx * sw : xx * sw + kw].max()
    return out


def forward_logits_f64(arch, weights, x):
    """Pre-softmax scores of the whole network in float64."""
    cur = x.astype(np.float64)
    for layer in arch.layers:
        if layer.kind == "conv2d":
            z = conv2d_f64(
                cur,
                weights[f"{layer.name}.weight"],
                weights[f"{layer.name}.bias"],
                layer.geometry.kernel,
                layer.geometry.stride,
                layer.geometry.padding,
            )
        elif layer.kind == "dense":
            z = weights[f"{layer.name}.weight"].astype(np.float64) @ cur + weights[
                f"{layer.name}.bias"
            ].astype(np.float64)
        elif layer.kind == "maxpool":
            z = maxpool2d_f64(cur, layer.kernel, layer.stride)
        else:
            z = cur.reshape(-1)
        if layer.activation == "relu":
            cur = np.maximum(z, 0.0)
        else:
            cur = z  # softmax layer: stop at the scores
    return cur


def fd_gradient_f64(arch, weights, x, class_index, h=1e-3):
    """Central finite differences of the class score w.r.t. each input value."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        fp = forward_logits_f64(arch, weights, xp)[class_index]
        fm = forward_logits_f64(arch, weights, xm)[class_index]
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad


def replicated_mean_f64(pooled, kernel, stride, out_hw):
    """Brute-force overlap-mean oracle for the unpooling replication step."""
    c, hp, wp = pooled.shape
    kh, kw = kernel
    sh, sw = stride
    h, w = out_hw
    sums = np.zeros((c, h, w), dtype=np.float64)
    counts = np.zeros((h, w), dtype=np.int64)
    for y in range(hp):
        for x in range(wp):
            for u in range(kh):
                for v in range(kw):
                    sums[:, y * sh + u, x * sw + v] += pooled[:, y, x]
                    counts[y * sh + u, x * sw + v] += 1
    out = np.zeros_like(sums)
    nz = counts > 0
    out[:, nz] = sums[:, nz] / counts[nz]
    return out
