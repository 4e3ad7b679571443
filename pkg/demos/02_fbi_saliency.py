#!/usr/bin/env python3
"""Produce a forward-backward saliency map and render it two ways.

The backward walk starts from a probe at the predicted class and filters
the flow with the forward activations at every layer; what survives down
at the pixels is a sparse signed support.
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
cfg = fb.FbiConfig()  # tau=10.0, top_fraction=0.5
saliency = fb.explain_fbi(trace, arch, weights, pred.top_class, cfg)

n = int(saliency.support.sum())
total = saliency.support.size
print(f"class {pred.top_class}: support covers {n}/{total} input entries "
      f"({100 * n / total:.1f}%)")

(OUT / "saliency.pgm").write_bytes(fb.save_pnm(fb.render_grayscale(saliency)))
(OUT / "saliency_overlay.ppm").write_bytes(fb.save_pnm(fb.render_overlay(saliency, img)))
print(f"wrote {OUT / 'saliency.pgm'} and {OUT / 'saliency_overlay.ppm'}")

# the support is where the explanation lives; show it as a 16x16 sketch
mask = saliency.support.max(axis=0)
print("\nsupport sketch (input plane):")
for row in mask:
    print("  " + "".join("#" if v else "." for v in row))
