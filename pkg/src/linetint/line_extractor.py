"""Line-drawing extraction network and its training loop.

A compact U-Net turns a color image into a single-channel line drawing:
four stride-2 encoder blocks (channels base, 2b, 4b, 8b), a mirrored
decoder with skip connections (the last skip is the input image itself),
and a tanh head.  Training is plain L1 against paired sketches — enough
for the extractor's only job here, which is manufacturing (line, color)
pairs for the colorization stage.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .checkpoint import group, load_checkpoint, prefixed, save_checkpoint
from .config import (STREAM_LINE_EXTRACTOR_DATA, STREAM_LINE_EXTRACTOR_INIT,
                     TrainConfig, derive_rng)
from .data import ImageFolder, validate_image
from .errors import TrainingDiverged, ValidationError
from .generator import ConvBlock
from .losses import l1_loss
from .nn import Conv2d, Module, ModuleList
from .optim import Adam


class LineExtractorNet(Module):
    """3-channel color in, 1-channel line drawing in [-1, 1] out.

    ``stages`` stride-2 encoder blocks followed by the mirrored decoder;
    H and W must be divisible by 2**stages.  ``image_size`` records the
    training resolution once known (enforced when set).
    """

    def __init__(self, rng, base=32, stages=4):
        super().__init__()
        if stages < 1:
            raise ValidationError(f"stages must be >= 1, got {stages}")
        self.base = base
        self.stages = stages
        self.image_size = None
        chans = [base * (2 ** i) for i in range(stages)]
        self.encoder = ModuleList([
            ConvBlock(3 if i == 0 else chans[i - 1], chans[i], 4, rng,
                      stride=2, padding=1)
            for i in range(stages)
        ])
        decoder = []
        for i in reversed(range(1, stages)):
            decoder.append(ConvBlock(chans[i] + chans[i - 1], chans[i - 1],
                                     3, rng, padding=1))
        decoder.append(ConvBlock(chans[0] + 3, base, 3, rng, padding=1))
        self.decoder = ModuleList(decoder)
        self.head = Conv2d(base, 1, 3, rng, padding=1)

    def forward(self, x):
        x = ad.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValidationError(f"expected (N, 3, H, W), got {x.shape}")
        h, w = x.shape[2], x.shape[3]
        factor = 2 ** self.stages
        if h % factor or w % factor or h < factor or w < factor:
            raise ValidationError(
                f"H and W must be multiples of {factor}, got {h}x{w}")
        if self.image_size is not None and (h, w) != (self.image_size, self.image_size):
            raise ValidationError(
                f"net was trained at {self.image_size}px, got {h}x{w}")
        skips = [x]
        out = x
        for block in self.encoder:
            out = block(out)
            skips.append(out)
        for i, block in enumerate(self.decoder):
            skip = skips[self.stages - 1 - i]
            out = block(ad.concat([ad.upsample_nearest2(out), skip], axis=1))
        return ad.tanh(self.head(out))


def extract_lines(color, net):
    """Deterministic inference: (3, H, W) color image -> (1, H, W) lines."""
    color = validate_image(np.asarray(color), channels=3)
    was_training = net.training
    net.eval()
    try:
        with ad.no_grad():
            out = net(ad.tensor(color[None]))
    finally:
        if was_training:
            net.train()
    return out.data[0]


def _paired_samples(dataset):
    """Normalize the dataset argument to a list of (color, sketch) arrays."""
    if isinstance(dataset, ImageFolder):
        if not dataset.has_sketches:
            raise ValidationError(
                "line-extractor training needs paired sketches "
                "(<root>/sketch/ directory)")
        return [(dataset.color(i), dataset.sketch(i)) for i in range(len(dataset))]
    pairs = list(dataset)
    if not pairs:
        raise ValidationError("line-extractor training needs at least one pair")
    for color, sketch in pairs:
        validate_image(color, channels=3)
        validate_image(sketch, channels=1)
    return pairs


def train_line_extractor(dataset, config: TrainConfig, base=32, stages=4,
                         progress=None):
    """Overfit/train LE on paired (color, sketch) images.

    Batches are sampled per iteration from an rng derived from
    (seed, stream, iteration), so runs are reproducible bit for bit.
    Returns (net, loss_history); history has one entry per iteration.
    """
    pairs = _paired_samples(dataset)
    net = LineExtractorNet(
        derive_rng(config.seed, STREAM_LINE_EXTRACTOR_INIT), base=base, stages=stages)
    net.image_size = config.image_size
    optimizer = Adam(dict(net.named_parameters()), lr=config.lr_g,
                     beta1=config.adam_beta1, beta2=config.adam_beta2)
    history = []
    for iteration in range(config.iterations):
        rng = derive_rng(config.seed, STREAM_LINE_EXTRACTOR_DATA, iteration)
        idx = rng.integers(0, len(pairs), size=config.batch_size)
        color = ad.tensor(np.stack([pairs[i][0] for i in idx]))
        sketch = np.stack([pairs[i][1] for i in idx])
        loss = l1_loss(net(color), ad.tensor(sketch))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite LE loss at iteration {iteration}")
        net.zero_grad()
        loss.backward()
        optimizer.step()
        history.append(value)
        if progress is not None:
            progress(iteration, value)
    return net, history


def save_line_extractor(path, net, config, history):
    meta = {
        "kind": "line_extractor",
        "base": net.base,
        "stages": net.stages,
        "image_size": net.image_size,
        "seed": config.seed,
        "iterations": config.iterations,
        "loss_history": [float(v) for v in history],
    }
    save_checkpoint(path, prefixed("model.", net.state_dict()), meta)


def load_line_extractor(path):
    """Rebuild a trained LE from its checkpoint.  Returns (net, meta)."""
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "line_extractor":
        raise ValidationError(f"{path} is not a line-extractor checkpoint")
    net = LineExtractorNet(np.random.default_rng(0),
                           base=int(meta["base"]), stages=int(meta["stages"]))
    net.load_state_dict(group(arrays, "model."))
    net.image_size = meta.get("image_size")
    net.eval()
    return net, meta
