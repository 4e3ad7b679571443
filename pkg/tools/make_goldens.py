#!/usr/bin/env python3
"""Regenerate the committed CLI golden files from the bundled fixture.

    python tools/make_goldens.py
"""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
GOLDEN = REPO / "tests" / "golden"
FIX = REPO / "fixtures" / "tinynet"

BASE = ["--arch", str(FIX / "arch.yaml"), "--weights", str(FIX / "weights.fbiw"),
        "--image", str(FIX / "images" / "demo.ppm")]

CASES = {
    "fbi.pgm": ["--method", "fbi"],
    "guided.pgm": ["--method", "guided"],
    "deconvnet.pgm": ["--method", "deconvnet"],
    "fbi_overlay.ppm": ["--method", "fbi", "--overlay"],
    "fbi_degenerate.pgm": ["--method", "fbi", "--tau", "0", "--top-frac", "1.0",
                           "--no-bias-adjoint"],
}


def run(args):
    proc = subprocess.run([sys.executable, "-m", "fbinet.cli", *args],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"cli failed ({proc.returncode}): {proc.stderr}")
    return proc.stdout


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    (GOLDEN / "predict.txt").write_text(run(["predict", *BASE]))
    for name, flags in CASES.items():
        out = GOLDEN / name
        run(["explain", *BASE, *flags, "--out", str(out)])
        data = out.read_bytes()
        raster = data.split(b"\n", 3)[3]
        print(f"{name}: {len(data)} bytes, {sum(b > 0 for b in raster)} nonzero raster bytes")
    print("goldens written to", GOLDEN)


if __name__ == "__main__":
    main()
