"""Convolutional attention (channel + spatial gating) and the
feature-dimension transform that turns an encoder pyramid into tokens.

The channel gate squeezes each feature map with both average- and
max-pooling, runs the two vectors through one shared bottleneck MLP, and
sigmoids their sum.  The spatial gate pools across channels (mean and max),
stacks the two maps, and convolves them down to a single-channel mask.
Both gates are multiplicative and bounded in (0, 1).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .nn import Conv2d, Linear, Module


class ChannelAttention(Module):
    """Channel gate: sigmoid(MLP(avgpool(x)) + MLP(maxpool(x))).

    The bottleneck MLP (C -> C/r -> C, ReLU between, no biases) is shared
    between the two pooled descriptors.
    """

    def __init__(self, channels, rng, reduction=4):
        super().__init__()
        if channels % reduction != 0:
            raise ValidationError(
                f"channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        self.fc1 = Linear(channels, channels // reduction, rng, bias=False)
        self.fc2 = Linear(channels // reduction, channels, rng, bias=False)

    def _mlp(self, pooled):
        return self.fc2(ad.relu(self.fc1(pooled)))

    def gate(self, x):
        n, c = x.shape[0], x.shape[1]
        flat = ad.reshape(x, (n, c, -1))
        avg = ad.mean(flat, axis=2)
        mx = ad.max_(flat, axis=2)
        g = ad.sigmoid(ad.add(self._mlp(avg), self._mlp(mx)))
        return ad.reshape(g, (n, c, 1, 1))

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ValidationError(f"expected {self.channels} channels, got {x.shape[1]}")
        return ad.mul(x, self.gate(x))


class SpatialAttention(Module):
    """Spatial gate: sigmoid(conv_kxk([mean_c(x); max_c(x)]))."""

    def __init__(self, rng, kernel_size=7):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValidationError(f"kernel_size must be odd, got {kernel_size}")
        self.conv = Conv2d(2, 1, kernel_size, rng, padding=kernel_size // 2, bias=False)

    def gate(self, x):
        avg = ad.mean(x, axis=1, keepdims=True)
        mx = ad.max_(x, axis=1, keepdims=True)
        return ad.sigmoid(self.conv(ad.concat([avg, mx], axis=1)))

    def forward(self, x):
        return ad.mul(x, self.gate(x))


class ConvAttentionBlock(Module):
    """Channel gate followed by spatial gate, applied multiplicatively."""

    def __init__(self, channels, rng, reduction=4, kernel_size=7):
        super().__init__()
        self.channel = ChannelAttention(channels, rng, reduction)
        self.spatial = SpatialAttention(rng, kernel_size)

    def forward(self, x):
        return self.spatial(self.channel(x))


def feature_dim_transform(maps):
    """Fuse a list of NCHW pyramid levels into a token matrix (N, L, D).

    Every level is bilinearly resized to the coarsest level's H x W, the
    channels are concatenated (D = sum of level channels), and the spatial
    grid is flattened row-major so token l sits at (y, x) = divmod(l, W).
    Returns (tokens, (height, width)).
    """
    if not maps:
        raise ValidationError("feature_dim_transform needs at least one map")
    maps = [ad.as_tensor(m) for m in maps]
    n = maps[0].shape[0]
    for m in maps:
        if m.ndim != 4 or m.shape[0] != n:
            raise ValidationError(f"expected NCHW maps with batch {n}, got {m.shape}")
    height, width = min((m.shape[2], m.shape[3]) for m in maps)
    resized = [ad.resize_bilinear(m, (height, width)) for m in maps]
    stacked = ad.concat(resized, axis=1)          # (N, D, H, W)
    depth = stacked.shape[1]
    tokens = ad.transpose(ad.reshape(stacked, (n, depth, height * width)), (0, 2, 1))
    return tokens, (height, width)


def fold_tokens(tokens, height, width):
    """Inverse of the flatten step: (N, L, D) -> (N, D, height, width)."""
    tokens = ad.as_tensor(tokens)
    n, length, depth = tokens.shape
    if length != height * width:
        raise ValidationError(f"L={length} does not match {height}x{width}")
    return ad.reshape(ad.transpose(tokens, (0, 2, 1)), (n, depth, height, width))
