#!/usr/bin/env python3
"""Sparsity is controlled by the masking threshold: sweep tau and watch.

Support size is non-increasing in tau; past the largest forward*backward
product everything is masked and the saliency is empty.
"""

from pathlib import Path

import numpy as np

import fbinet as fb

FIX = Path(__file__).resolve().parent.parent / "fixtures" / "tinynet"

arch = fb.load_architecture((FIX / "arch.yaml").read_bytes())
weights = fb.load_weights((FIX / "weights.fbiw").read_bytes())
img = fb.load_pnm((FIX / "images" / "demo.ppm").read_bytes())
x = fb.preprocess(img, np.zeros(3, dtype=np.float32), arch.input_shape)
trace, pred = fb.forward_trace(arch, weights, x)

print(f"{'tau':>8} {'support':>8} {'fraction':>9}")
for tau in (0.0, 0.1, 1.0, 3.0, 10.0, 30.0, 100.0, 1e4):
    s = fb.explain_fbi(trace, arch, weights, pred.top_class,
                       fb.FbiConfig(tau=tau, top_fraction=0.5))
    n = int(s.support.sum())
    print(f"{tau:>8g} {n:>8} {n / s.support.size:>9.3f}")

print("\nthe same knob exists on the command line: fbinet explain --tau ...")
