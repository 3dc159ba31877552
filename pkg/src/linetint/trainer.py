"""Adversarial training loop.

Each iteration alternates one discriminator update (real pair vs. detached
fake) with one generator update (weighted sum of adversarial, L1,
perceptual, and style terms), both on Adam with the configured rates and
no learning-rate schedule.

Reproducibility contract: batches and TPS warps for iteration k are drawn
from an rng derived from (seed, stream, k), and every stateful array —
weights, norm buffers, spectral u/v, Adam moments — lives in the
checkpoint, so resuming from step k continues bit-for-bit identically to
an uninterrupted run.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import group, load_checkpoint, prefixed, save_checkpoint
from .config import (STREAM_DISCRIMINATOR_INIT, STREAM_GAN_DATA,
                     STREAM_GENERATOR_INIT, TrainConfig, config_from_dict,
                     derive_rng)
from .data import make_training_triple, validate_image
from .discriminator import DiscriminatorNet
from .errors import TrainingDiverged, ValidationError
from .generator import Generator
from .losses import adv_losses, l1_loss, perceptual_loss, style_loss, total_generator_loss
from .optim import Adam

CSV_HEADER = ("iteration", "loss_D", "loss_G", "L1", "perc", "style", "adv")


@dataclass
class TrainState:
    config: TrainConfig
    generator: Generator
    discriminator: DiscriminatorNet
    opt_g: Adam
    opt_d: Adam
    iteration: int = 0
    history: list = field(default_factory=list)


def init_state(config: TrainConfig) -> TrainState:
    generator = Generator(derive_rng(config.seed, STREAM_GENERATOR_INIT))
    discriminator = DiscriminatorNet(
        derive_rng(config.seed, STREAM_DISCRIMINATOR_INIT))
    opt_g = Adam(dict(generator.named_parameters()), lr=config.lr_g,
                 beta1=config.adam_beta1, beta2=config.adam_beta2)
    opt_d = Adam(dict(discriminator.named_parameters()), lr=config.lr_d,
                 beta1=config.adam_beta1, beta2=config.adam_beta2)
    return TrainState(config, generator, discriminator, opt_g, opt_d)


def save_train_state(path, state: TrainState):
    arrays = {}
    arrays.update(prefixed("generator.", state.generator.state_dict()))
    arrays.update(prefixed("discriminator.", state.discriminator.state_dict()))
    arrays.update(prefixed("opt_g.", state.opt_g.state_dict()))
    arrays.update(prefixed("opt_d.", state.opt_d.state_dict()))
    meta = {
        "kind": "gan",
        "iteration": state.iteration,
        "config": state.config.to_dict(),
        "loss_history": [[float(v) for v in row] for row in state.history],
    }
    save_checkpoint(path, arrays, meta)


def load_train_state(path) -> TrainState:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "gan":
        raise ValidationError(f"{path} is not a training checkpoint")
    config = config_from_dict(meta["config"])
    state = init_state(config)
    state.generator.load_state_dict(group(arrays, "generator."))
    state.discriminator.load_state_dict(group(arrays, "discriminator."))
    state.opt_g.load_state_dict(group(arrays, "opt_g."))
    state.opt_d.load_state_dict(group(arrays, "opt_d."))
    state.iteration = int(meta["iteration"])
    state.history = [list(row) for row in meta.get("loss_history", [])]
    return state


def _abort_diverged(state, out_dir, what, value):
    snapshot = None
    if out_dir is not None:
        snapshot = Path(out_dir) / f"diverged_{state.iteration:06d}.npz"
        save_train_state(snapshot, state)
    raise TrainingDiverged(
        f"non-finite {what} ({value}) at iteration {state.iteration}",
        snapshot_path=snapshot)


def train_step(batch, state: TrainState, extractor=None, out_dir=None):
    """One alternating update.  ``batch`` is (line, reference, ground_truth)
    arrays of shape (B, C, H, W).  Appends a history row and returns state."""
    line_np, ref_np, gt_np = batch
    line, ref, gt = ad.tensor(line_np), ad.tensor(ref_np), ad.tensor(gt_np)
    cfg = state.config
    gen, dis = state.generator, state.discriminator
    gen.train()
    dis.train()

    fake = gen(line, ref)

    # discriminator update: real pair vs. detached fake
    d_real = dis(line, gt)
    d_fake = dis(line, fake.detach())
    loss_d, _ = adv_losses(d_real, d_fake, cfg.lsgan_targets)
    loss_d_value = loss_d.item()
    if not np.isfinite(loss_d_value):
        _abort_diverged(state, out_dir, "discriminator loss", loss_d_value)
    dis.zero_grad()
    loss_d.backward()
    state.opt_d.step()

    # generator update: full weighted objective through the updated critic
    d_fake_for_g = dis(line, fake)
    _, adv_g = adv_losses(d_real.detach(), d_fake_for_g, cfg.lsgan_targets)
    rec = l1_loss(fake, gt)
    if extractor is not None:
        perc = perceptual_loss(fake, gt, extractor)
        style = style_loss(fake, gt, extractor)
    else:
        perc = ad.tensor(np.float32(0.0))
        style = ad.tensor(np.float32(0.0))
    total = total_generator_loss((adv_g, rec, perc, style), cfg.weights)
    parts = {"adv": adv_g.item(), "L1": rec.item(), "perc": perc.item(),
             "style": style.item(), "total generator loss": total.item()}
    for what, value in parts.items():
        if not np.isfinite(value):
            _abort_diverged(state, out_dir, what, value)
    gen.zero_grad()
    dis.zero_grad()
    total.backward()
    state.opt_g.step()

    state.iteration += 1
    state.history.append([state.iteration, loss_d_value, parts["total generator loss"],
                          parts["L1"], parts["perc"], parts["style"], parts["adv"]])
    return state


class _LineCache:
    """Memoizes the per-index line drawing: LE inference is deterministic,
    so each training image is extracted exactly once."""

    def __init__(self, dataset, line_fn):
        self.dataset = dataset
        self.line_fn = line_fn
        self._cache = {}

    def __call__(self, index):
        if index not in self._cache:
            line = np.asarray(self.line_fn(self.dataset.color(index)))
            validate_image(line, channels=1)
            self._cache[index] = line
        return self._cache[index]


def _assemble_batch(dataset, line_cache, indices, rng):
    lines, refs, gts = [], [], []
    for i in indices:
        gt = dataset.color(int(i))
        triple = make_training_triple(gt, lambda _: line_cache(int(i)), rng)
        lines.append(triple.line)
        refs.append(triple.reference)
        gts.append(triple.ground_truth)
    return np.stack(lines), np.stack(refs), np.stack(gts)


def train(config: TrainConfig, dataset, line_fn, out_dir, extractor=None,
          resume_from=None, progress=None):
    """Run (or resume) training; returns the final checkpoint path.

    ``dataset`` provides ``color(i)`` and ``len``; ``line_fn`` maps a color
    image to its line drawing.  Checkpoints land in ``out_dir`` every
    ``checkpoint_every`` steps and at the end; losses stream to
    ``out_dir/losses.csv`` with one row per iteration.
    """
    if len(dataset) == 0:
        raise ValidationError("training needs at least one image")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        state = load_train_state(resume_from)
        if state.config != config:
            warnings.warn("resume checkpoint carries its own config; using it")
        config = state.config
    else:
        state = init_state(config)
    if extractor is None and (config.weights.lambda_perc > 0
                              or config.weights.lambda_style > 0):
        warnings.warn("no feature extractor: perceptual and style terms are "
                      "disabled for this run")

    line_cache = _LineCache(dataset, line_fn)
    csv_path = out_dir / "losses.csv"
    write_header = not csv_path.exists() or state.iteration == 0
    checkpoint_path = None
    with open(csv_path, "w" if state.iteration == 0 else "a", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(CSV_HEADER)
        while state.iteration < config.iterations:
            step = state.iteration  # rng key for the step about to run
            rng = derive_rng(config.seed, STREAM_GAN_DATA, step)
            indices = rng.integers(0, len(dataset), size=config.batch_size)
            batch = _assemble_batch(dataset, line_cache, indices, rng)
            train_step(batch, state, extractor=extractor, out_dir=out_dir)
            writer.writerow(state.history[-1])
            done = state.iteration
            if done % config.checkpoint_every == 0 or done == config.iterations:
                checkpoint_path = out_dir / f"checkpoint_{done:06d}.npz"
                save_train_state(checkpoint_path, state)
                fh.flush()
            if progress is not None:
                progress(state)
    return checkpoint_path
