"""Shared builders and bundled-fixture paths."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fbinet import Architecture, ConvGeometry, LayerSpec, WeightArchive

REPO = Path(__file__).resolve().parent.parent
FIXTURE_DIR = REPO / "fixtures" / "tinynet"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


def build_net(input_shape, plan, seed=0, scale=0.5):
    """Construct a random-weight sequential net from a compact layer plan.

    Plan entries:
      ("conv", name, out_ch, kernel, stride, padding, activation)
      ("pool", name, kernel, stride)
      ("flatten", name)
      ("dense", name, out_size, activation)
    """
    rng = np.random.default_rng(seed)
    layers = []
    entries = {}
    cur = tuple(input_shape)
    for item in plan:
        kind = item[0]
        if kind == "conv":
            _, name, out_ch, k, s, p, act = item
            geom = ConvGeometry(kernel=k, stride=s, padding=p)
            layers.append(
                LayerSpec(kind="conv2d", name=name, activation=act,
                          in_channels=cur[0], out_channels=out_ch, geometry=geom)
            )
            entries[f"{name}.weight"] = rng.standard_normal(
                (out_ch, cur[0], *k), dtype=np.float32) * np.float32(scale)
            entries[f"{name}.bias"] = rng.standard_normal(out_ch, dtype=np.float32) * np.float32(scale)
            h, w = geom.out_hw((cur[1], cur[2]))
            cur = (out_ch, h, w)
        elif kind == "pool":
            _, name, k, s = item
            layers.append(LayerSpec(kind="maxpool", name=name, kernel=k, stride=s))
            geom = ConvGeometry(kernel=k, stride=s)
            h, w = geom.out_hw((cur[1], cur[2]))
            cur = (cur[0], h, w)
        elif kind == "flatten":
            layers.append(LayerSpec(kind="flatten", name=item[1]))
            cur = (cur[0] * cur[1] * cur[2],)
        elif kind == "dense":
            _, name, out_size, act = item
            layers.append(LayerSpec(kind="dense", name=name, activation=act,
                                    in_size=cur[0], out_size=out_size))
            entries[f"{name}.weight"] = rng.standard_normal(
                (out_size, cur[0]), dtype=np.float32) * np.float32(scale)
            entries[f"{name}.bias"] = rng.standard_normal(out_size, dtype=np.float32) * np.float32(scale)
            cur = (out_size,)
        else:
            raise ValueError(kind)
    arch = Architecture(input_shape=tuple(input_shape), layers=tuple(layers))
    return arch, WeightArchive(entries=entries)


def tiny_conv_net(seed=0, input_shape=(1, 8, 8), classes=3, relu=True, scale=0.5):
    """Two convs, a pool, and two dense layers; the workhorse backward fixture."""
    act = "relu" if relu else "none"
    plan = [
        ("conv", "conv1", 4, (3, 3), (1, 1), (1, 1), act),
        ("pool", "pool1", (2, 2), (2, 2)),
        ("conv", "conv2", 3, (3, 3), (1, 1), (1, 1), act),
        ("flatten", "flat"),
        ("dense", "fc1", 8, act),
        ("dense", "fc2", classes, "softmax"),
    ]
    return build_net(input_shape, plan, seed=seed, scale=scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_paths():
    paths = {
        "arch": FIXTURE_DIR / "arch.yaml",
        "weights": FIXTURE_DIR / "weights.fbiw",
        "metadata": FIXTURE_DIR / "metadata.json",
        "images": FIXTURE_DIR / "images",
    }
    for p in paths.values():
        if not p.exists():
            pytest.skip(f"bundled fixture missing: {p}")
    return paths
