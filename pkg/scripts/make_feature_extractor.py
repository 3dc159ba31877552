"""Generate the bundled feature-extractor weight file.

The pyramid is a fixed-seed random five-stage conv net (He-scaled, so
activations keep a sane scale through ReLU).  Random frozen features give
meaningful perceptual/style distances while keeping the repository free of
large pretrained binaries; a distilled classifier checkpoint with the same
key layout can replace the file without code changes.

Run from the repository root:  python3 scripts/make_feature_extractor.py
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

SEED = 414213
CHANNELS = [16, 32, 64, 128, 256]
STRIDES = [1, 2, 2, 2, 2]
# normalization convention the hypothetical source classifier was trained with
INPUT_MEAN = [0.485, 0.456, 0.406]
INPUT_STD = [0.229, 0.224, 0.225]

OUT_PATH = Path(__file__).resolve().parent.parent / "src" / "linetint" / "assets" / "feature_extractor.npz"


def main():
    rng = np.random.default_rng(SEED)
    arrays = {
        "input_mean": np.asarray(INPUT_MEAN, dtype=np.float32),
        "input_std": np.asarray(INPUT_STD, dtype=np.float32),
        "strides": np.asarray(STRIDES, dtype=np.int64),
    }
    prev = 3
    for i, ch in enumerate(CHANNELS):
        fan_in = prev * 3 * 3
        std = math.sqrt(2.0 / fan_in)
        arrays[f"conv{i}.weight"] = rng.normal(
            0.0, std, size=(ch, prev, 3, 3)).astype(np.float32)
        arrays[f"conv{i}.bias"] = np.zeros(ch, dtype=np.float32)
        prev = ch
    OUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    np.savez(OUT_PATH, **arrays)
    size_kb = OUT_PATH.stat().st_size / 1024
    print(f"wrote {OUT_PATH} ({size_kb:.0f} KiB)")


if __name__ == "__main__":
    main()
