"""Run configuration.

``TrainConfig`` carries exactly the fields a config file may set; YAML
config files mirror it one-to-one (``weights`` is a nested block of the
four lambda values).  Unknown keys are configuration errors, not warnings,
so typos fail fast.

Randomness discipline: every consumer derives a fresh generator from
integer key tuples via ``derive_rng`` — nothing shares mutable rng state,
which is what makes checkpoint resume bit-exact: the rng for iteration k
depends only on (seed, stream, k).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ValidationError
from .losses import TARGET_CONVENTIONS, LossWeights

# rng stream tags (arbitrary distinct ints, stable across versions)
STREAM_GENERATOR_INIT = 1
STREAM_DISCRIMINATOR_INIT = 2
STREAM_GAN_DATA = 3
STREAM_LINE_EXTRACTOR_INIT = 4
STREAM_LINE_EXTRACTOR_DATA = 5
STREAM_EVAL_PAIRING = 6


def derive_rng(*keys):
    """Independent generator for an integer key path, e.g. (seed, stream, step)."""
    return np.random.default_rng(list(keys))


@dataclass(frozen=True)
class TrainConfig:
    image_size: int = 256
    batch_size: int = 16
    iterations: int = 250000
    lr_g: float = 0.0001
    lr_d: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    lsgan_targets: str = "standard"
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.image_size < 16 or self.image_size % 16 != 0:
            raise ValidationError(
                f"image_size must be a positive multiple of 16, got {self.image_size}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValidationError("learning rates must be > 0")
        for beta in (self.adam_beta1, self.adam_beta2):
            if not 0.0 <= beta < 1.0:
                raise ValidationError(f"adam betas must lie in [0, 1), got {beta}")
        if self.lsgan_targets not in TARGET_CONVENTIONS:
            raise ValidationError(
                f"lsgan_targets must be one of {TARGET_CONVENTIONS}, "
                f"got {self.lsgan_targets!r}")
        if self.checkpoint_every < 1:
            raise ValidationError(
                f"checkpoint_every must be >= 1, got {self.checkpoint_every}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["weights"] = dataclasses.asdict(self.weights)
        return d


def desk_preset(**overrides):
    """Small-footprint preset for CPU-scale runs (64 px, batch 4)."""
    base = dict(image_size=64, batch_size=4, iterations=2000,
                checkpoint_every=500)
    base.update(overrides)
    return TrainConfig(**base)


_INT_FIELDS = {"image_size", "batch_size", "iterations", "seed", "checkpoint_every"}
_FLOAT_FIELDS = {"lr_g", "lr_d", "adam_beta1", "adam_beta2"}
_WEIGHT_FIELDS = {"lambda_adv", "lambda_rec", "lambda_perc", "lambda_style"}


def config_from_dict(data, base=None):
    """Build a TrainConfig from a plain mapping; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a mapping, got {type(data).__name__}")
    cfg = base if base is not None else TrainConfig()
    known = _INT_FIELDS | _FLOAT_FIELDS | {"weights", "lsgan_targets"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    changes = {}
    try:
        for key, raw in data.items():
            if key in _INT_FIELDS:
                changes[key] = int(raw)
            elif key in _FLOAT_FIELDS:
                changes[key] = float(raw)
            elif key == "lsgan_targets":
                changes[key] = str(raw)
            elif key == "weights":
                if not isinstance(raw, dict):
                    raise ConfigError("weights must be a mapping of lambda values")
                bad = set(raw) - _WEIGHT_FIELDS
                if bad:
                    raise ConfigError(f"unknown weight keys: {sorted(bad)}")
                merged = dataclasses.asdict(cfg.weights)
                merged.update({k: float(v) for k, v in raw.items()})
                changes[key] = LossWeights(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    try:
        return cfg.replace(**changes)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base=None):
    """Parse a YAML config file into a TrainConfig."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data, base=base)


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` strings (dotted ``weights.lambda_x`` allowed)."""
    data = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        key = key.strip()
        if key.startswith("weights."):
            data.setdefault("weights", {})[key[len("weights."):]] = value
        else:
            data[key] = value
    return config_from_dict(data, base=cfg)
