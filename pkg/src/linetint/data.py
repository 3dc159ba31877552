"""Image I/O, normalization, and online training-triple assembly.

Images are plain numpy arrays, float32, shape (C, H, W), values in [-1, 1],
with C = 1 for line drawings and C = 3 for color.  A training triple pairs
a line drawing extracted from a ground-truth image with a TPS-distorted
copy of the same image serving as the color reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .tps import random_tps_params, tps_warp

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def validate_image(image, channels=None, size=None):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise ValidationError(f"expected (C, H, W) with C in {{1, 3}}, got {image.shape}")
    if channels is not None and image.shape[0] != channels:
        raise ValidationError(f"expected {channels}-channel image, got {image.shape[0]}")
    if size is not None and image.shape[1:] != (size, size):
        raise ValidationError(f"expected {size}x{size} image, got {image.shape[1:]}")
    if not np.all(np.isfinite(image)):
        raise ValidationError("image contains non-finite values")
    if image.min() < -1.0 or image.max() > 1.0:
        raise ValidationError("image values outside [-1, 1]")
    return image


def to_luminance(rgb_hw3):
    r, g, b = LUMA_WEIGHTS
    return rgb_hw3[..., 0] * r + rgb_hw3[..., 1] * g + rgb_hw3[..., 2] * b


def load_image(path, channels=3, size=256):
    """Read a PNG/JPEG, bilinearly resize to size x size, map to [-1, 1].

    channels=1 converts RGB sources to luminance; size=None keeps the
    native dimensions.  0 maps to -1.0 and 255 to 1.0 exactly.
    """
    if channels not in (1, 3):
        raise ValidationError(f"channels must be 1 or 3, got {channels}")
    if size is not None and size <= 0:
        raise ValidationError(f"size must be positive, got {size}")
    with Image.open(path) as img:
        if img.width == 0 or img.height == 0:
            raise ValidationError(f"zero-dimension image: {path}")
        rgb = img.convert("RGB")
        if size is not None and (img.width, img.height) != (size, size):
            rgb = rgb.resize((size, size), Image.BILINEAR)
        arr = np.asarray(rgb, dtype=np.float32)
    if channels == 1:
        arr = to_luminance(arr)[..., None]
    arr = arr / np.float32(127.5) - np.float32(1.0)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def resize_image(image, height, width):
    """Bilinear resize of a (C, H, W) array; exact identity at same size."""
    from . import autodiff as ad

    image = validate_image(image)
    if height <= 0 or width <= 0:
        raise ValidationError(f"target size must be positive, got {height}x{width}")
    with ad.no_grad():
        out = ad.resize_bilinear(ad.tensor(np.asarray(image)[None]), (height, width))
    return np.clip(out.data[0], -1.0, 1.0)


def save_image(image, path):
    """Write a (C, H, W) [-1, 1] array as PNG/JPEG (deterministic bytes)."""
    image = validate_image(np.clip(np.asarray(image), -1.0, 1.0))
    arr = np.round((image + 1.0) * 127.5).astype(np.uint8)
    if arr.shape[0] == 1:
        pil = Image.fromarray(arr[0], mode="L")
    else:
        pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    pil.save(path)


@dataclass(frozen=True)
class TrainingTriple:
    line: np.ndarray          # (1, H, W)
    reference: np.ndarray     # (3, H, W)
    ground_truth: np.ndarray  # (3, H, W)

    def __post_init__(self):
        validate_image(self.line, channels=1)
        validate_image(self.reference, channels=3)
        validate_image(self.ground_truth, channels=3)
        if not (self.line.shape[1:] == self.reference.shape[1:]
                == self.ground_truth.shape[1:]):
            raise ValidationError("triple components must share H x W")


def make_training_triple(ground_truth, extractor, rng, tps_grid=5, tps_scale=0.08):
    """Assemble (line, reference, ground_truth) for one sample.

    ``extractor`` maps a (3, H, W) image to its (1, H, W) line drawing; the
    reference is the ground truth warped by random TPS params drawn from
    ``rng``.  Pure given (inputs, rng state), so deterministic per seed.
    """
    ground_truth = validate_image(ground_truth, channels=3)
    line = np.asarray(extractor(ground_truth))
    validate_image(line, channels=1)
    if line.shape[1:] != ground_truth.shape[1:]:
        raise ValidationError(
            f"extractor output {line.shape[1:]} != image {ground_truth.shape[1:]}")
    params = random_tps_params(rng, grid=tps_grid, scale=tps_scale)
    reference = tps_warp(ground_truth, params)
    return TrainingTriple(line=line, reference=reference, ground_truth=ground_truth)


class ImageFolder:
    """Dataset directory: <root>/color/*.png plus optional <root>/sketch/*.png
    paired by filename.  Loaded images are cached at the configured size."""

    def __init__(self, root, size=256):
        self.root = Path(root)
        self.size = size
        color_dir = self.root / "color"
        if not color_dir.is_dir():
            raise ValidationError(f"missing color/ directory under {self.root}")
        self.names = sorted(
            p.name for p in color_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not self.names:
            raise ValidationError(f"no images found in {color_dir}")
        self._color_cache = {}
        self._sketch_cache = {}

    def __len__(self):
        return len(self.names)

    @property
    def has_sketches(self):
        return (self.root / "sketch").is_dir()

    def color(self, index):
        if index not in self._color_cache:
            path = self.root / "color" / self.names[index]
            self._color_cache[index] = load_image(path, channels=3, size=self.size)
        return self._color_cache[index]

    def sketch(self, index):
        if index not in self._sketch_cache:
            path = self.root / "sketch" / self.names[index]
            if not path.exists():
                raise ValidationError(f"no paired sketch for {self.names[index]}")
            self._sketch_cache[index] = load_image(path, channels=1, size=self.size)
        return self._sketch_cache[index]
