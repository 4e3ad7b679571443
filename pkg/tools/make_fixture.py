#!/usr/bin/env python3
"""Build the bundled tinynet fixture: train offline, export, calibrate, verify.

Run once from the repo root (requires torch, which the shipped package and
test suite do not):

    python tools/make_fixture.py

Outputs under fixtures/tinynet/:
    arch.yaml       architecture document
    weights.fbiw    trained weights (convs are bias-free)
    metadata.json   class names, per-image square boxes, tau scale constant
    images/         PPM images: demo, 50 held-out, 20 proximity

The task is deliberately spatial: both classes carry the same brightness
budget (16 bright pixels over uniform noise), but only class 1 arranges
them as a contiguous 4x4 square.  A global-brightness shortcut therefore
cannot separate the classes and the trained filters must localize.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

import fbinet as fb  # noqa: E402

OUT = REPO / "fixtures" / "tinynet"
SIZE = 16
SQUARE = 4
SEED = 20240817


def synth_image(rng, with_square):
    """One 16x16 RGB u8 image; returns (pixels hwc, bbox or None)."""
    img = rng.integers(0, 80, size=(SIZE, SIZE, 3), dtype=np.int64)
    palette = np.array([250, 190, 150], dtype=np.int64)
    if with_square:
        r = int(rng.integers(0, SIZE - SQUARE + 1))
        c = int(rng.integers(0, SIZE - SQUARE + 1))
        color = rng.permutation(palette)
        jitter = rng.integers(-10, 11, size=(SQUARE, SQUARE, 3))
        img[r : r + SQUARE, c : c + SQUARE] = color[None, None, :] + jitter
        bbox = (r, c, SQUARE, SQUARE)
    else:
        # same brightness budget, scattered: no contiguous square forms
        pos = rng.choice(SIZE * SIZE, size=SQUARE * SQUARE, replace=False)
        for p in pos:
            color = rng.permutation(palette) + rng.integers(-10, 11, size=3)
            img[p // SIZE, p % SIZE] = color
        bbox = None
    return np.clip(img, 0, 255).astype(np.uint8), bbox


def synth_batch(rng, n):
    xs, ys, boxes = [], [], []
    for _ in range(n):
        label = int(rng.integers(0, 2))
        pix, bbox = synth_image(rng, with_square=label == 1)
        xs.append(pix)
        ys.append(label)
        boxes.append(bbox)
    return np.stack(xs), np.array(ys), boxes


class TinyNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1, bias=False)
        self.conv2 = nn.Conv2d(8, 8, 3, padding=1, bias=False)
        self.pool = nn.MaxPool2d(2, 2)
        self.fc1 = nn.Linear(8 * 4 * 4, 16)
        self.fc2 = nn.Linear(16, 2)

    def forward(self, x):
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        x = x.flatten(1)
        x = torch.relu(self.fc1(x))
        return self.fc2(x)


ARCH_YAML = """\
input_shape: [3, 16, 16]
layers:
  - {type: conv2d, name: conv1, activation: relu,
     in_channels: 3, out_channels: 8, kernel: [3, 3], stride: [1, 1], padding: [1, 1]}
  - {type: maxpool, name: pool1, kernel: [2, 2], stride: [2, 2]}
  - {type: conv2d, name: conv2, activation: relu,
     in_channels: 8, out_channels: 8, kernel: [3, 3], stride: [1, 1], padding: [1, 1]}
  - {type: maxpool, name: pool2, kernel: [2, 2], stride: [2, 2]}
  - {type: flatten, name: flat}
  - {type: dense, name: fc1, activation: relu, in: 128, out: 16}
  - {type: dense, name: fc2, activation: softmax, in: 16, out: 2}
"""


def train(rng):
    torch.manual_seed(SEED)
    net = TinyNet()
    xs, ys, _ = synth_batch(rng, 4000)
    vx, vy, _ = synth_batch(rng, 800)
    xt = torch.from_numpy(xs.transpose(0, 3, 1, 2).astype(np.float32))
    yt = torch.from_numpy(ys)
    vxt = torch.from_numpy(vx.transpose(0, 3, 1, 2).astype(np.float32))
    opt = torch.optim.Adam(net.parameters(), lr=3e-4)
    loss_fn = nn.CrossEntropyLoss()
    for epoch in range(25):
        perm = torch.randperm(xt.shape[0])
        for i in range(0, xt.shape[0], 64):
            idx = perm[i : i + 64]
            opt.zero_grad()
            loss = loss_fn(net(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
        with torch.no_grad():
            acc = (net(vxt).argmax(1).numpy() == vy).mean()
        print(f"epoch {epoch:2d}  loss {loss.item():.4f}  val acc {acc:.3f}")
    return net, float(acc)


# Per-representation magnitude targets for the homogeneous rescaling below.
ACT_TARGET = 25.0
LOGIT_TARGET = 12.0


def rescale(entries, calib_tensors):
    """Bring every representation to a common magnitude without changing argmax.

    ReLU networks are positively homogeneous: scaling layer l's weights by
    beta_l scales every representation above it.  Raw 0..255 inputs push the
    conv activations orders of magnitude above the dense ones, so no single
    masking threshold can bite at every layer; after this the default
    tau = 10.0 is meaningful throughout (tau_scale = 1.0 in the metadata).
    """
    arch = fb.load_architecture(ARCH_YAML)
    weights = fb.WeightArchive(entries=dict(entries))
    acts = {"conv1": [], "conv2": [], "fc1": [], "logit": []}
    for x in calib_tensors:
        trace, _ = fb.forward_trace(arch, weights, x)
        by = {r.name: r for r in trace.layers}
        for k in ("conv1", "conv2", "fc1"):
            a = by[k].a
            acts[k].append(a[a > 0].mean())
        acts["logit"].append(np.abs(by["fc2"].z).max())
    m = {k: float(np.mean(v)) for k, v in acts.items()}
    print("mean positive activations:", m)
    cum = [ACT_TARGET / m["conv1"], ACT_TARGET / m["conv2"],
           ACT_TARGET / m["fc1"], LOGIT_TARGET / m["logit"]]
    betas = [cum[0], cum[1] / cum[0], cum[2] / cum[1], cum[3] / cum[2]]
    out = dict(entries)
    for (name, beta, c) in zip(("conv1", "conv2", "fc1", "fc2"), betas, cum):
        out[f"{name}.weight"] = (out[f"{name}.weight"] * np.float32(beta)).astype(np.float32)
        out[f"{name}.bias"] = (out[f"{name}.bias"] * np.float32(c)).astype(np.float32)
    return out


def export(net, calib_tensors):
    entries = {
        "conv1.weight": net.conv1.weight.detach().numpy(),
        "conv1.bias": np.zeros(8, dtype=np.float32),
        "conv2.weight": net.conv2.weight.detach().numpy(),
        "conv2.bias": np.zeros(8, dtype=np.float32),
        "fc1.weight": net.fc1.weight.detach().numpy(),
        "fc1.bias": net.fc1.bias.detach().numpy(),
        "fc2.weight": net.fc2.weight.detach().numpy(),
        "fc2.bias": net.fc2.bias.detach().numpy(),
    }
    entries = rescale(entries, calib_tensors)
    (OUT / "weights.fbiw").write_bytes(fb.save_weights(entries))
    (OUT / "arch.yaml").write_text(ARCH_YAML)
    return fb.load_architecture(ARCH_YAML), fb.load_weights((OUT / "weights.fbiw").read_bytes())


def to_tensor(pix):
    img = fb.ImageU8(width=SIZE, height=SIZE, channels=3, pixels=pix)
    return fb.preprocess(img, np.zeros(3, dtype=np.float32), (3, SIZE, SIZE))


def mass_factor(values, bbox):
    mags = np.abs(values).sum(axis=0)
    total = mags.sum()
    if total == 0:
        return 0.0
    r, c, hh, ww = bbox
    inside = mags[r : r + hh, c : c + ww].sum()
    area_baseline = (hh * ww) / (SIZE * SIZE)
    return float(inside / total / area_baseline)


def localization_rate(arch, weights, images, boxes, tau):
    factors = []
    for pix, bbox in zip(images, boxes):
        trace, _ = fb.forward_trace(arch, weights, to_tensor(pix))
        s = fb.explain_fbi(trace, arch, weights, 1,
                           fb.FbiConfig(tau=tau, top_fraction=0.5))
        factors.append(mass_factor(s.values, bbox))
    return float(np.mean([f >= 2.0 for f in factors])), factors


def proximity_check(arch, weights, images):
    """FBI degenerate mode vs DeconvNet under the channel-permutation null."""
    rng = np.random.default_rng(77)
    perms = [p for p in
             [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
             if p != (0, 1, 2)]
    margins = []
    for pix in images:
        trace, pred = fb.forward_trace(arch, weights, to_tensor(pix))
        s_fbi = fb.explain_fbi(trace, arch, weights, pred.top_class,
                               fb.FbiConfig(tau=0.0, top_fraction=1.0, bias_adjoint=False))
        s_dec = fb.explain_deconvnet(trace, arch, weights, pred.top_class)
        f = s_fbi.values.reshape(-1).astype(np.float64)
        d = s_dec.values.astype(np.float64)

        def cos(a, b):
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            return float(a @ b / (na * nb)) if na > 0 and nb > 0 else 0.0

        actual = cos(f, d.reshape(-1))
        null = [cos(f, d[list(perms[int(rng.integers(0, len(perms)))])].reshape(-1))
                for _ in range(200)]
        p99 = float(np.percentile(null, 99))
        margins.append((actual, p99))
    worst = min(a - b for a, b in margins)
    print(f"proximity: worst margin over {len(images)} images = {worst:.4f} "
          f"(actual range {min(a for a,_ in margins):.3f}..{max(a for a,_ in margins):.3f})")
    return worst


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "images").mkdir(exist_ok=True)
    rng = np.random.default_rng(SEED)
    net, val_acc = train(rng)
    net.eval()

    # calibration set, disjoint from the committed image sets below
    calib_rng = np.random.default_rng(SEED + 2)
    calib, calib_boxes = [], []
    for _ in range(50):
        pix, bbox = synth_image(calib_rng, with_square=True)
        calib.append(pix)
        calib_boxes.append(bbox)
    arch, weights = export(net, [to_tensor(p) for p in calib[:10]])

    # rescaling must not disturb predictions: engine vs torch top-1
    check_x, _, _ = synth_batch(rng, 64)
    agree = 0
    with torch.no_grad():
        torch_top = net(torch.from_numpy(
            check_x.transpose(0, 3, 1, 2).astype(np.float32))).argmax(1).numpy()
    for i in range(64):
        _, pred = fb.forward_trace(arch, weights, to_tensor(check_x[i]))
        agree += int(pred.top_class == torch_top[i])
    print(f"engine/torch top-1 agreement: {agree}/64")
    assert agree >= 63

    for tau in (0.0, 3.0, 6.0, 10.0, 15.0, 25.0):
        rate, factors = localization_rate(arch, weights, calib, calib_boxes, tau)
        print(f"calibration tau {tau:>5.1f}: pass rate {rate:.2f} "
              f"median factor {float(np.median(factors)):.2f}")
    tau_eff = 10.0  # tau_scale = 1.0: activations sit at reference magnitude
    rate, _ = localization_rate(arch, weights, calib, calib_boxes, tau_eff)
    assert rate >= 0.85, f"calibration localization too weak at default tau: {rate}"

    # committed image sets (square class only for held-out localization)
    heldout, heldout_boxes = [], []
    img_rng = np.random.default_rng(SEED + 1)
    for _ in range(50):
        pix, bbox = synth_image(img_rng, with_square=True)
        heldout.append(pix)
        heldout_boxes.append(bbox)
    proximity = [synth_image(img_rng, with_square=True)[0] for _ in range(20)]
    demo_pix, demo_bbox = synth_image(img_rng, with_square=True)

    heldout_rate, heldout_factors = localization_rate(
        arch, weights, heldout, heldout_boxes, tau_eff)
    print(f"held-out localization pass rate: {heldout_rate:.2f}")
    assert heldout_rate >= 0.88, "insufficient margin over the 0.80 gate"

    worst_margin = proximity_check(arch, weights, proximity)
    assert worst_margin > 0.02, "proximity null separation too thin"

    def save(name, pix):
        img = fb.ImageU8(width=SIZE, height=SIZE, channels=3, pixels=pix)
        (OUT / "images" / name).write_bytes(fb.save_pnm(img))

    images_meta = {}
    for i, (pix, bbox) in enumerate(zip(heldout, heldout_boxes)):
        name = f"heldout_{i:02d}.ppm"
        save(name, pix)
        images_meta[name] = {"class": 1, "bbox": list(bbox)}
    for i, pix in enumerate(proximity):
        name = f"proximity_{i:02d}.ppm"
        save(name, pix)
        images_meta[name] = {"class": 1}
    save("demo.ppm", demo_pix)
    images_meta["demo.ppm"] = {"class": 1, "bbox": list(demo_bbox)}

    metadata = {
        "model": "tinynet",
        "input_shape": [3, SIZE, SIZE],
        "classes": ["scattered", "square"],
        "preprocessing": {"mean": [0.0, 0.0, 0.0],
                          "note": "raw 8-bit sample values, no mean subtraction"},
        "tau_scale": tau_eff / 10.0,
        "tau_scale_note": (
            "activation-magnitude scale of this fixture; the effective masking "
            "threshold is 10.0 * tau_scale.  The exported weights are "
            "homogeneously rescaled so every representation sits at "
            "reference-CNN magnitude, hence 1.0."
        ),
        "train": {"seed": SEED, "val_accuracy": val_acc,
                  "torch_top1_agreement": f"{agree}/64"},
        "measured": {
            "heldout_localization_pass_rate": heldout_rate,
            "heldout_factor_median": float(np.median(heldout_factors)),
            "proximity_worst_margin": worst_margin,
        },
        "images": images_meta,
    }
    (OUT / "metadata.json").write_text(json.dumps(metadata, indent=2) + "\n")
    print("fixture written to", OUT)


if __name__ == "__main__":
    main()
