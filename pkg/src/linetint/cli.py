"""Command-line interface.

Subcommands: extract-lines, augment-preview, train-le, train, colorize,
eval.  Exit codes: 0 success, 2 usage/configuration/input error (unknown
flags, missing files, bad config keys), 1 runtime failure (e.g. diverged
training).

The CLI starts from the desk preset (64 px, batch 4) so commands are
usable on an ordinary CPU; a config file and/or repeated ``--set
key=value`` overrides select anything else, including the full-scale
published defaults (256 px, batch 16, 250k iterations).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import apply_overrides, desk_preset, load_config
from .data import (IMAGE_SUFFIXES, ImageFolder, load_image, resize_image,
                   save_image)
from .errors import ConfigError, LinetintError, ValidationError
from .feature_extractor import FeatureExtractor
from .line_extractor import (extract_lines, load_line_extractor,
                             save_line_extractor, train_line_extractor)
from .metrics import evaluate, write_report
from .tps import random_tps_params, tps_warp
from .trainer import load_train_state, train


def _load_cfg(args):
    cfg = desk_preset()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _native_size(path):
    try:
        with Image.open(path) as img:
            return img.height, img.width
    except UnidentifiedImageError as exc:
        raise ValidationError(f"not an image file: {path}") from exc


def _load_extractor(spec_path):
    """'bundled' -> packaged weights (or None + warning); 'none' -> None."""
    if spec_path == "none":
        return None
    if spec_path == "bundled":
        fx = FeatureExtractor.load_default()
        if fx is None:
            print("warning: bundled feature weights missing; perceptual terms off",
                  file=sys.stderr)
        return fx
    return FeatureExtractor.load(spec_path)


# -- subcommand implementations --------------------------------------------------

def cmd_extract_lines(args):
    net, _ = load_line_extractor(args.ckpt)
    src = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if src.is_dir():
        files = sorted(p for p in src.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise ValidationError(f"no images found in {src}")
    elif src.exists():
        files = [src]
    else:
        raise FileNotFoundError(f"no such file or directory: {src}")
    for path in files:
        h, w = _native_size(path)
        color = load_image(path, channels=3, size=net.image_size)
        line = extract_lines(color, net)
        out_path = out_dir / (path.stem + ".png")
        save_image(resize_image(line, h, w), out_path)
        print(f"{path} -> {out_path}")
    return 0


def cmd_augment_preview(args):
    image = load_image(args.input, channels=3, size=None)
    params = random_tps_params(np.random.default_rng(args.seed),
                               grid=args.grid, scale=args.scale)
    save_image(tps_warp(image, params), args.out)
    print(f"wrote {args.out} (seed {args.seed})")
    return 0


def cmd_train_le(args):
    cfg = _load_cfg(args)
    dataset = ImageFolder(args.data, size=cfg.image_size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    every = max(1, cfg.iterations // 20)

    def progress(iteration, value):
        if (iteration + 1) % every == 0 or iteration == 0:
            print(f"iter {iteration + 1}/{cfg.iterations}  L1 {value:.4f}")

    net, history = train_line_extractor(dataset, cfg, progress=progress)
    ckpt = out_dir / "line_extractor.npz"
    save_line_extractor(ckpt, net, cfg, history)
    with open(out_dir / "le_losses.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "L1"])
        writer.writerows((i + 1, v) for i, v in enumerate(history))
    print(f"wrote {ckpt} (final L1 {history[-1]:.4f})")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args)
    dataset = ImageFolder(args.data, size=cfg.image_size)
    le_net, _ = load_line_extractor(args.line_extractor)
    extractor = _load_extractor(args.extractor)
    every = max(1, cfg.iterations // 20)

    def progress(state):
        it = state.iteration
        if it % every == 0 or it == 1:
            _, loss_d, loss_g, l1, perc, style, adv = state.history[-1]
            print(f"iter {it}/{cfg.iterations}  D {loss_d:.4f}  G {loss_g:.4f}  "
                  f"L1 {l1:.4f}  perc {perc:.4f}  style {style:.5f}  adv {adv:.4f}")

    ckpt = train(cfg, dataset, lambda img: extract_lines(img, le_net), args.out,
                 extractor=extractor, resume_from=args.resume, progress=progress)
    print(f"wrote {ckpt}")
    return 0


def cmd_colorize(args):
    state = load_train_state(args.ckpt)
    size = state.config.image_size
    h, w = _native_size(args.line)
    line = load_image(args.line, channels=1, size=size)
    ref = load_image(args.ref, channels=3, size=size)
    out = state.generator.colorize(line, ref)
    save_image(resize_image(out, h, w), args.out)
    print(f"wrote {args.out} ({h}x{w})")
    return 0


def cmd_eval(args):
    state = load_train_state(args.ckpt)
    dataset = ImageFolder(args.data, size=state.config.image_size)
    line_fn = None
    if args.line_extractor:
        le_net, _ = load_line_extractor(args.line_extractor)
        line_fn = lambda img: extract_lines(img, le_net)
    extractor = _load_extractor(args.extractor)
    report = evaluate(state.generator.colorize, dataset, mode=args.mode,
                      extractor=extractor, line_fn=line_fn, seed=args.seed,
                      config={"checkpoint": str(args.ckpt), "data": str(args.data),
                              "mode": args.mode, "seed": args.seed,
                              "image_size": state.config.image_size})
    csv_path, json_path = write_report(report, args.out)
    parts = ["%s=%s" % (k, "n/a" if v is None else f"{v:.4f}")
             for k, v in report.aggregates.items()]
    print(f"{args.mode}-reference over {len(report.rows)} images: "
          + "  ".join(parts))
    print(f"wrote {csv_path} and {json_path}")
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="linetint",
        description="Attention-based reference colorization of line drawings.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="YAML config file (desk preset base)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, repeatable (e.g. --set seed=7)")

    p = sub.add_parser("extract-lines",
                       help="convert color images to line drawings")
    p.add_argument("--ckpt", required=True, help="line-extractor checkpoint")
    p.add_argument("--in", dest="input", required=True,
                   help="input image or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_extract_lines)

    p = sub.add_parser("augment-preview",
                       help="write the TPS-distorted version of an image")
    p.add_argument("--in", dest="input", required=True, help="input image")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=5, help="control grid size")
    p.add_argument("--scale", type=float, default=0.08,
                   help="max control-point displacement")
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("train-le", help="train the line-extraction network")
    p.add_argument("--data", required=True,
                   help="dataset root with color/ and sketch/")
    p.add_argument("--out", required=True, help="output directory")
    add_config_flags(p)
    p.set_defaults(func=cmd_train_le)

    p = sub.add_parser("train", help="train the colorization GAN")
    p.add_argument("--data", required=True, help="dataset root with color/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--line-extractor", required=True,
                   help="trained line-extractor checkpoint")
    p.add_argument("--extractor", default="bundled",
                   help="feature weights: path, 'bundled', or 'none'")
    p.add_argument("--resume", help="checkpoint to continue from")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("colorize", help="colorize one line drawing")
    p.add_argument("--line", required=True, help="line-drawing image")
    p.add_argument("--ref", required=True, help="color reference image")
    p.add_argument("--ckpt", required=True, help="training checkpoint")
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_colorize)

    p = sub.add_parser("eval", help="evaluate a checkpoint over a dataset")
    p.add_argument("--data", required=True, help="dataset root with color/")
    p.add_argument("--ckpt", required=True, help="training checkpoint")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--mode", choices=["self", "random"], default="self")
    p.add_argument("--line-extractor",
                   help="line-extractor checkpoint (default: sketch/ pairs)")
    p.add_argument("--extractor", default="bundled",
                   help="feature weights: path, 'bundled', or 'none'")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own usage message
        return 0 if exc.code == 0 else 2
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LinetintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
