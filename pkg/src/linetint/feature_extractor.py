"""Frozen convolutional feature pyramid for perceptual and style losses.

Weights live in an .npz file (keys conv0.weight/conv0.bias ... conv4.weight/
conv4.bias, plus input_mean, input_std, strides) and are never trained: the
forward pass treats them as constants, so gradients flow only to the input
image.  Feature taps are the post-ReLU activations of the five stages.

A weight file distilled from a large pretrained classifier can be dropped in;
the bundled default is a fixed-seed random pyramid, which still yields usable
perceptual distances (random projections preserve relative geometry) and
keeps the package self-contained.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ValidationError

STAGES = 5

DEFAULT_WEIGHTS_PATH = Path(__file__).parent / "assets" / "feature_extractor.npz"


class FeatureExtractor:
    """Five conv stages (3x3, ReLU), the first stride 1 and the rest
    stride 2.  ``features(x)`` returns the five post-ReLU maps for a
    (N, 3, H, W) input in [-1, 1]."""

    def __init__(self, weights, biases, input_mean, input_std, strides):
        if len(weights) != STAGES or len(biases) != STAGES or len(strides) != STAGES:
            raise ValidationError(f"extractor needs exactly {STAGES} stages")
        prev = 3
        for i, w in enumerate(weights):
            if w.ndim != 4 or w.shape[1] != prev or w.shape[2:] != (3, 3):
                raise ValidationError(
                    f"stage {i} weight {w.shape} incompatible with {prev} inputs")
            if biases[i].shape != (w.shape[0],):
                raise ValidationError(f"stage {i} bias shape {biases[i].shape}")
            prev = w.shape[0]
        input_mean = np.asarray(input_mean, dtype=np.float32).reshape(1, 3, 1, 1)
        input_std = np.asarray(input_std, dtype=np.float32).reshape(1, 3, 1, 1)
        if np.any(input_std <= 0):
            raise ValidationError("input_std must be positive")
        self.weights = [ad.tensor(np.asarray(w, dtype=np.float32)) for w in weights]
        self.biases = [ad.tensor(np.asarray(b, dtype=np.float32)) for b in biases]
        self.input_mean = input_mean
        self.input_std = input_std
        self.strides = [int(s) for s in strides]

    @property
    def channels(self):
        return [w.shape[0] for w in self.weights]

    def cast(self, dtype):
        """A copy with all weights in ``dtype`` (for float64 grad checks)."""
        out = object.__new__(FeatureExtractor)
        out.weights = [ad.tensor(w.data.astype(dtype)) for w in self.weights]
        out.biases = [ad.tensor(b.data.astype(dtype)) for b in self.biases]
        out.input_mean = self.input_mean.astype(dtype)
        out.input_std = self.input_std.astype(dtype)
        out.strides = list(self.strides)
        return out

    def features(self, x):
        """Five post-ReLU feature maps of x (N, 3, H, W) in [-1, 1]."""
        x = ad.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValidationError(f"expected (N, 3, H, W) input, got {x.shape}")
        # remap [-1, 1] -> the normalization the weights were trained under
        scale = 0.5 / self.input_std
        shift = (0.5 - self.input_mean) / self.input_std
        h = ad.add(ad.mul(x, ad.tensor(scale)), ad.tensor(shift))
        taps = []
        for w, b, stride in zip(self.weights, self.biases, self.strides):
            h = ad.relu(ad.conv2d(h, w, b, stride=stride, padding=1))
            taps.append(h)
        return taps

    @classmethod
    def load(cls, path):
        path = Path(path)
        with np.load(path) as z:
            try:
                weights = [z[f"conv{i}.weight"] for i in range(STAGES)]
                biases = [z[f"conv{i}.bias"] for i in range(STAGES)]
                mean, std = z["input_mean"], z["input_std"]
                strides = z["strides"]
            except KeyError as exc:
                raise ValidationError(f"malformed extractor file {path}: {exc}") from exc
        return cls(weights, biases, mean, std, strides)

    @classmethod
    def load_default(cls):
        """The bundled weights, or None when the asset is absent."""
        if not DEFAULT_WEIGHTS_PATH.exists():
            return None
        return cls.load(DEFAULT_WEIGHTS_PATH)
