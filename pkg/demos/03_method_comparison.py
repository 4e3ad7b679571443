#!/usr/bin/env python3
"""Compare the forward-backward method against guided backprop and DeconvNet.

All three share the recorded forward trace; they differ in how the backward
signal is gated and how max-pooling is inverted.
"""

from pathlib import Path

import numpy as np

import fbinet as fb

FIX = Path(__file__).resolve().parent.parent / "fixtures" / "tinynet"
OUT = Path(__file__).resolve().parent / "output"
OUT.mkdir(exist_ok=True)

arch = fb.load_architecture((FIX / "arch.yaml").read_bytes())
weights = fb.load_weights((FIX / "weights.fbiw").read_bytes())
img = fb.load_pnm((FIX / "images" / "demo.ppm").read_bytes())
x = fb.preprocess(img, np.zeros(3, dtype=np.float32), arch.input_shape)
trace, pred = fb.forward_trace(arch, weights, x)

maps = {
    "fbi": fb.explain_fbi(trace, arch, weights, pred.top_class),
    "guided": fb.explain_guided(trace, arch, weights, pred.top_class),
    "deconvnet": fb.explain_deconvnet(trace, arch, weights, pred.top_class),
}

print(f"explaining class {pred.top_class}\n")
print(f"{'method':<10} {'support':>8} {'|values| mean':>14} {'max':>10}")
for name, s in maps.items():
    mags = np.abs(s.values)
    print(f"{name:<10} {int(s.support.sum()):>8} {mags[mags > 0].mean():>14.4f} "
          f"{mags.max():>10.4f}")
    (OUT / f"{name}.pgm").write_bytes(fb.save_pnm(fb.render_grayscale(s)))

print(f"\nimages written to {OUT}/")
print("note how much smaller the fbi support is: the forward masking drops "
      "everything the forward activations do not corroborate")
