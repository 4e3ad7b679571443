"""Round-trip verification: source framework vs the engine CLI on the same images.

The engine is consumed strictly through its external surfaces: the exported
files and the `fbinet` command.  Engine probabilities (printed to 6 decimals)
are compared in log space, which is the shift-canonical form of the logits.
"""

from __future__ import annotations

import json
import math
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import models
from .images import load_ppm_file


def find_engine(engine=None) -> str:
    path = engine or shutil.which("fbinet")
    if path is None or not Path(path).exists() and shutil.which(path) is None:
        raise FileNotFoundError(
            "engine binary not found: install the fbinet package or pass --engine")
    return str(path)


def engine_predict(engine: str, files_dir: Path, image_path) -> dict[int, float]:
    proc = subprocess.run(
        [engine, "predict",
         "--arch", str(files_dir / "arch.yaml"),
         "--weights", str(files_dir / "weights.fbiw"),
         "--image", str(image_path)],
        capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"engine predict failed ({proc.returncode}): {proc.stderr.strip()}")
    out: dict[int, float] = {}
    for line in proc.stdout.strip().splitlines():
        idx, prob = line.split("\t")
        out[int(idx)] = float(prob)
    return out


def source_log_probs(model, norm, raw_pixels: np.ndarray) -> np.ndarray:
    x = raw_pixels.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    if norm is not None:
        means, stds = norm
        x = (x - np.asarray(means, np.float32)[:, None, None]) / np.asarray(
            stds, np.float32)[:, None, None]
    with torch.no_grad():
        logits = model(torch.from_numpy(x[None]).float())[0].double()
        return torch.log_softmax(logits, dim=0).numpy()


@dataclass
class RoundtripReport:
    rows: list[str] = field(default_factory=list)
    agreements: int = 0
    n: int = 0
    max_deviation: float = 0.0

    @property
    def agreement_rate(self) -> float:
        return self.agreements / self.n if self.n else 0.0

    def render(self) -> str:
        summary = (f"summary: top1 agreement {self.agreements}/{self.n}, "
                   f"max per-class logit deviation {self.max_deviation:.3e}")
        return "\n".join([*self.rows, summary])


def verify_roundtrip(files_dir, image_paths, engine=None, prob_floor=1e-3) -> RoundtripReport:
    """Compare engine and source predictions image by image.

    Logit deviation is measured on log-probabilities over the classes the
    engine prints (top-5) whose probability exceeds ``prob_floor``; below
    that the 6-decimal print quantization dominates.
    """
    files_dir = Path(files_dir)
    engine = find_engine(engine)
    manifest = json.loads((files_dir / "manifest.json").read_text())
    model, _, norm, _, _ = models.resolve(manifest["model"], manifest.get("weights", "random"))

    report = RoundtripReport()
    for path in image_paths:
        raw = load_ppm_file(path)
        log_p_src = source_log_probs(model, norm, raw)
        engine_probs = engine_predict(engine, files_dir, path)
        top1_src = int(np.argmax(log_p_src))
        top1_eng = next(iter(engine_probs))
        agree = top1_src == top1_eng

        deviations = [abs(math.log(p) - log_p_src[idx])
                      for idx, p in engine_probs.items() if p >= prob_floor]
        dev = max(deviations) if deviations else float("nan")
        report.rows.append(
            f"image {Path(path).name}: top1 src={top1_src} engine={top1_eng} "
            f"agree={'yes' if agree else 'NO'} max|dlogp|={dev:.3e} "
            f"({len(deviations)} classes)")
        report.agreements += int(agree)
        report.n += 1
        if not math.isnan(dev):
            report.max_deviation = max(report.max_deviation, dev)
    return report
