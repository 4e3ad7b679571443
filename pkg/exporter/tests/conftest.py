"""Shared exporter test fixtures: one tiny export per session, engine discovery."""

import shutil

import numpy as np
import pytest

from fbi_export import export_model
from fbi_export.formats import write_ppm
from fbi_export import models


@pytest.fixture(scope="session")
def engine():
    path = shutil.which("fbinet")
    if path is None:
        pytest.skip("fbinet engine not on PATH (install the primary package)")
    return path


@pytest.fixture(scope="session")
def tiny_export(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_export")
    model, shape, norm, labels, extras = models.resolve("tiny")
    export_model(model, "tiny", shape, out, normalization=norm,
                 labels=labels, extra_manifest=extras)
    return out


@pytest.fixture()
def ppm_images(tmp_path):
    def make(n, size=16, seed=0):
        rng = np.random.default_rng(seed)
        paths = []
        for i in range(n):
            pix = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            p = tmp_path / f"img_{i}.ppm"
            p.write_bytes(write_ppm(pix))
            paths.append(p)
        return paths

    return make
