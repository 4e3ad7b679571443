#!/usr/bin/env python3
"""Load the bundled model, run the recording forward pass, inspect the trace.

Everything the backward methods need — pre-activations, post-activations,
pool switches — is captured in one pass.
"""

from pathlib import Path

import numpy as np

import fbinet as fb

FIX = Path(__file__).resolve().parent.parent / "fixtures" / "tinynet"

arch = fb.load_architecture((FIX / "arch.yaml").read_bytes())
weights = fb.load_weights((FIX / "weights.fbiw").read_bytes())
fb.validate(arch, weights)
print(f"model: {len(arch.layers)} layers, input {arch.input_shape}")
for layer, shape in zip(arch.layers, arch.rep_shapes[1:]):
    print(f"  {layer.name:8s} {layer.kind:8s} -> {shape}")

img = fb.load_pnm((FIX / "images" / "demo.ppm").read_bytes())
x = fb.preprocess(img, np.zeros(3, dtype=np.float32), arch.input_shape)
trace, pred = fb.forward_trace(arch, weights, x)

print(f"\npredicted class {pred.top_class} "
      f"with probabilities {np.array2string(pred.probabilities, precision=6)}")
print("\nrecorded trace:")
for rec in trace.layers:
    extra = " (+switches)" if rec.switches is not None else ""
    print(f"  {rec.name:8s} z{list(rec.z.shape)} a{list(rec.a.shape)}{extra}")
