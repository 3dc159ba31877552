"""Reference-based colorization generator.

Two mirrored encoders (line drawing, color reference) produce four-level
feature pyramids, each level refined by a convolutional attention block.
The pyramids are flattened by the feature-dimension transform into token
matrices, fused by stop-gradient attention (cross over the reference,
then self over the fused tokens), folded back to a spatial map, and
decoded with nearest-neighbor upsampling plus skip connections from the
line encoder.  Output is tanh-bounded RGB in [-1, 1].
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .attention import ConvAttentionBlock, feature_dim_transform, fold_tokens
from .errors import ValidationError
from .nn import BatchNorm2d, Conv2d, Module, ModuleList
from .sga import SgaFusion


class ConvBlock(Module):
    """conv -> batchnorm -> ReLU."""

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, kernel, rng,
                           stride=stride, padding=padding, bias=False)
        self.norm = BatchNorm2d(out_ch)

    def forward(self, x):
        return ad.relu(self.norm(self.conv(x)))


class Encoder(Module):
    """Four stages: stride-1 stem then three stride-2 halvings, channels
    base -> 2*base -> 4*base -> 8*base, each output gated by attention."""

    def __init__(self, in_channels, base, rng, reduction=4):
        super().__init__()
        chans = [base, 2 * base, 4 * base, 8 * base]
        self.stages = ModuleList([
            ConvBlock(in_channels, chans[0], 3, rng, stride=1, padding=1),
            ConvBlock(chans[0], chans[1], 4, rng, stride=2, padding=1),
            ConvBlock(chans[1], chans[2], 4, rng, stride=2, padding=1),
            ConvBlock(chans[2], chans[3], 4, rng, stride=2, padding=1),
        ])
        self.attend = ModuleList([ConvAttentionBlock(c, rng, reduction) for c in chans])
        self.channels = chans

    def forward(self, x):
        """Returns the list of four attended feature maps, finest first."""
        feats = []
        for stage, attend in zip(self.stages, self.attend):
            x = stage(x)
            feats.append(attend(x))
        return feats


class ResBlock(Module):
    """conv-BN-ReLU-conv-BN plus identity."""

    def __init__(self, channels, rng):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, rng, padding=1, bias=False)
        self.norm1 = BatchNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, rng, padding=1, bias=False)
        self.norm2 = BatchNorm2d(channels)

    def forward(self, x):
        h = ad.relu(self.norm1(self.conv1(x)))
        return ad.add(x, self.norm2(self.conv2(h)))


class Generator(Module):
    """colorized = G(line (N,1,H,W), reference (N,3,H,W)); H, W multiples of 8."""

    def __init__(self, rng, base=32, res_blocks=4, reduction=4):
        super().__init__()
        self.base = base
        self.line_encoder = Encoder(1, base, rng, reduction)
        self.ref_encoder = Encoder(3, base, rng, reduction)
        token_depth = sum(self.line_encoder.channels)  # 15 * base
        self.fusion = SgaFusion(token_depth, rng)
        bott = 8 * base
        self.bottleneck = ConvBlock(token_depth, bott, 3, rng, padding=1)
        self.res_blocks = ModuleList([ResBlock(bott, rng) for _ in range(res_blocks)])
        # decoder: up x2 then conv over [up ; line skip], coarse to fine
        self.dec3 = ConvBlock(bott + 4 * base, 4 * base, 3, rng, padding=1)
        self.dec2 = ConvBlock(4 * base + 2 * base, 2 * base, 3, rng, padding=1)
        self.dec1 = ConvBlock(2 * base + base, base, 3, rng, padding=1)
        self.head = Conv2d(base, 3, 3, rng, padding=1)

    @staticmethod
    def _check_inputs(line, reference):
        if line.ndim != 4 or line.shape[1] != 1:
            raise ValidationError(f"line must be (N, 1, H, W), got {line.shape}")
        if reference.ndim != 4 or reference.shape[1] != 3:
            raise ValidationError(
                f"reference must be (N, 3, H, W), got {reference.shape}")
        if line.shape[0] != reference.shape[0] or line.shape[2:] != reference.shape[2:]:
            raise ValidationError(
                f"line {line.shape} and reference {reference.shape} must share N, H, W")
        h, w = line.shape[2], line.shape[3]
        if h % 8 or w % 8 or h < 8 or w < 8:
            raise ValidationError(f"H and W must be multiples of 8, got {h}x{w}")

    def forward(self, line, reference):
        line, reference = ad.as_tensor(line), ad.as_tensor(reference)
        self._check_inputs(line, reference)
        line_feats = self.line_encoder(line)
        ref_feats = self.ref_encoder(reference)
        line_tokens, (h, w) = feature_dim_transform(line_feats)
        ref_tokens, _ = feature_dim_transform(ref_feats)
        fused = self.fusion(line_tokens, ref_tokens)
        x = self.bottleneck(fold_tokens(fused, h, w))
        for block in self.res_blocks:
            x = block(x)
        x = self.dec3(ad.concat([ad.upsample_nearest2(x), line_feats[2]], axis=1))
        x = self.dec2(ad.concat([ad.upsample_nearest2(x), line_feats[1]], axis=1))
        x = self.dec1(ad.concat([ad.upsample_nearest2(x), line_feats[0]], axis=1))
        return ad.tanh(self.head(x))

    def colorize(self, line, reference):
        """Inference helper: eval-mode forward without graph, numpy in/out."""
        was_training = self.training
        self.eval()
        try:
            with ad.no_grad():
                out = self.forward(ad.tensor(np.asarray(line)[None]),
                                   ad.tensor(np.asarray(reference)[None]))
        finally:
            if was_training:
                self.train()
        return out.data[0]
