"""Generate the committed sample corpus: flat-color "cel" images with dark
outlines plus paired outline-only sketches, in the layout ImageFolder
expects (<root>/color, <root>/sketch).

The images are synthetic but shaped like the real task: closed regions
bounded by clean lines, filled with flat saturated colors over a soft
background gradient.  The sketch is exactly the outline set of its color
image, so (sketch -> color) is learnable, and a reference image determines
the palette.

Run from the repository root:
    python3 scripts/make_sample_corpus.py
writes data/sample (8 pairs) and data/holdout (4 pairs), 256x256 PNGs.
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

SIZE = 256
SEED = 271828

PALETTES = [
    [(233, 84, 107), (255, 180, 70), (80, 160, 227)],
    [(116, 190, 87), (240, 223, 98), (171, 100, 190)],
    [(70, 130, 180), (250, 128, 114), (244, 214, 118)],
    [(199, 83, 58), (94, 182, 157), (236, 179, 101)],
    [(150, 111, 214), (255, 148, 180), (120, 200, 232)],
    [(96, 153, 102), (222, 120, 81), (132, 112, 255)],
]
OUTLINE = (28, 24, 32)


def _background(rng):
    top = rng.integers(185, 240, size=3)
    bottom = rng.integers(185, 240, size=3)
    t = np.linspace(0.0, 1.0, SIZE)[:, None, None]
    grad = (1 - t) * top[None, None, :] + t * bottom[None, None, :]
    return np.repeat(grad, SIZE, axis=1).astype(np.uint8)


def _convex_polygon(rng, cx, cy, radius):
    k = int(rng.integers(3, 7))
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=k))
    radii = rng.uniform(0.55, 1.0, size=k) * radius
    return [(cx + r * math.cos(a), cy + r * math.sin(a))
            for a, r in zip(angles, radii)]


def _plan_shapes(rng):
    palette = PALETTES[int(rng.integers(0, len(PALETTES)))]
    shapes = []
    for _ in range(int(rng.integers(3, 6))):
        kind = ["ellipse", "rect", "polygon"][int(rng.integers(0, 3))]
        cx, cy = rng.uniform(48, SIZE - 48, size=2)
        rx, ry = rng.uniform(28, 72, size=2)
        fill = palette[int(rng.integers(0, len(palette)))]
        width = int(rng.integers(2, 5))
        if kind == "polygon":
            pts = _convex_polygon(rng, cx, cy, (rx + ry) / 2)
            shapes.append(("polygon", pts, fill, width))
        elif kind == "ellipse":
            shapes.append(("ellipse", (cx - rx, cy - ry, cx + rx, cy + ry),
                           fill, width))
        else:
            shapes.append(("rect", (cx - rx, cy - ry, cx + rx, cy + ry),
                           fill, width))
    return shapes


def _render(shapes, rng, color=True):
    if color:
        canvas = Image.fromarray(_background(rng))
    else:
        canvas = Image.new("RGB", (SIZE, SIZE), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    for kind, geom, fill, width in shapes:
        kwargs = {"outline": OUTLINE, "width": width}
        if color:
            kwargs["fill"] = fill
        if kind == "polygon":
            draw.polygon(geom, **kwargs)
        elif kind == "ellipse":
            draw.ellipse(geom, **kwargs)
        else:
            draw.rounded_rectangle(geom, radius=10, **kwargs)
    return canvas


def write_set(root, count, rng, start=1):
    color_dir = Path(root) / "color"
    sketch_dir = Path(root) / "sketch"
    color_dir.mkdir(parents=True, exist_ok=True)
    sketch_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        shapes = _plan_shapes(rng)
        name = f"img{start + i:02d}.png"
        _render(shapes, rng, color=True).save(color_dir / name)
        _render(shapes, rng, color=False).save(sketch_dir / name)
    print(f"wrote {count} pairs under {root}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", type=int, default=8)
    parser.add_argument("--holdout", type=int, default=4)
    parser.add_argument("--root", default="data")
    args = parser.parse_args()
    rng = np.random.default_rng(SEED)
    write_set(Path(args.root) / "sample", args.train, rng, start=1)
    write_set(Path(args.root) / "holdout", args.holdout, rng,
              start=args.train + 1)


if __name__ == "__main__":
    main()
