"""Training losses: pixel reconstruction, perceptual, style, adversarial,
and their weighted total.

All reductions are means, so values are comparable across image sizes and
batch sizes.  The adversarial pair implements least-squares GAN objectives
under two target conventions:

* ``standard`` (default): real -> 1, fake -> 0 for the discriminator, and
  the generator drives its fakes toward 1.
* ``paper``: the published form with the assignments flipped (real -> 0,
  fake -> 1 on the discriminator side).  Kept behind this switch for
  fidelity; it removes the adversarial game, so it is not the default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ValidationError

TARGET_CONVENTIONS = ("standard", "paper")


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 1.0
    lambda_rec: float = 30.0
    lambda_perc: float = 0.01
    lambda_style: float = 50.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValidationError(f"{name} must be >= 0, got {value}")


def l1_loss(generated, target):
    """Mean absolute difference over all elements."""
    generated, target = ad.as_tensor(generated), ad.as_tensor(target)
    if generated.shape != target.shape:
        raise ValidationError(
            f"shape mismatch: {generated.shape} vs {target.shape}")
    return ad.mean(ad.abs_(ad.sub(generated, target)))


def gram_matrix(features):
    """G = F F^T / (C*H*W) for (C, H, W) input, or per-sample for (N, C, H, W)."""
    features = ad.as_tensor(features)
    if features.ndim == 3:
        c, h, w = features.shape
        flat = ad.reshape(features, (c, h * w))
        return ad.mul(ad.matmul(flat, ad.transpose(flat)), 1.0 / (c * h * w))
    if features.ndim == 4:
        n, c, h, w = features.shape
        flat = ad.reshape(features, (n, c, h * w))
        return ad.mul(ad.matmul(flat, ad.transpose(flat, (0, 2, 1))), 1.0 / (c * h * w))
    raise ValidationError(f"expected (C, H, W) or (N, C, H, W), got {features.shape}")


def _require_extractor(extractor):
    if extractor is None:
        raise ConfigError(
            "feature extractor unavailable: provide extractor weights or disable "
            "the perceptual/style terms")
    return extractor


def perceptual_loss(generated, target, extractor):
    """Sum over the five feature layers of mean |phi_l(gen) - phi_l(gt)|."""
    _require_extractor(extractor)
    gen_feats = extractor.features(generated)
    with ad.no_grad():
        target_feats = extractor.features(ad.as_tensor(target).detach())
    total = None
    for fg, ft in zip(gen_feats, target_feats):
        term = ad.mean(ad.abs_(ad.sub(fg, ft.detach())))
        total = term if total is None else ad.add(total, term)
    return total


def style_loss(generated, target, extractor):
    """Sum over the five feature layers of mean |gram(gen) - gram(gt)|."""
    _require_extractor(extractor)
    gen_feats = extractor.features(generated)
    with ad.no_grad():
        target_feats = extractor.features(ad.as_tensor(target).detach())
    total = None
    for fg, ft in zip(gen_feats, target_feats):
        term = ad.mean(ad.abs_(ad.sub(gram_matrix(fg), gram_matrix(ft.detach()))))
        total = term if total is None else ad.add(total, term)
    return total


def _mse_to(scores, target_value):
    diff = ad.sub(ad.as_tensor(scores), float(target_value))
    return ad.mean(ad.mul(diff, diff))


def adv_losses(d_real, d_fake, targets="standard"):
    """(loss_D, loss_G) least-squares objectives from raw score maps.

    loss_G = mean((1 - d_fake)^2) under both conventions; only the
    discriminator's target assignment flips ("standard": real->1, fake->0;
    "paper": real->0, fake->1).
    """
    if targets not in TARGET_CONVENTIONS:
        raise ValidationError(
            f"targets must be one of {TARGET_CONVENTIONS}, got {targets!r}")
    if targets == "standard":
        loss_d = ad.add(_mse_to(d_real, 1.0), _mse_to(d_fake, 0.0))
    else:
        loss_d = ad.add(_mse_to(d_real, 0.0), _mse_to(d_fake, 1.0))
    loss_g = _mse_to(d_fake, 1.0)
    return loss_d, loss_g


def total_generator_loss(parts, weights=LossWeights()):
    """lambda_adv*adv + lambda_rec*rec + lambda_perc*perc + lambda_style*style.

    ``parts`` is (adv, rec, perc, style); plain numbers combine in python
    floats (useful for exact arithmetic checks), tensors stay in the graph.
    """
    if len(parts) != 4:
        raise ValidationError(f"expected 4 loss parts, got {len(parts)}")
    adv, rec, perc, style = parts
    lams = (weights.lambda_adv, weights.lambda_rec,
            weights.lambda_perc, weights.lambda_style)
    if all(isinstance(p, (int, float)) for p in parts):
        return ((lams[0] * adv + lams[1] * rec) + lams[2] * perc) + lams[3] * style
    total = None
    for lam, part in zip(lams, parts):
        term = ad.mul(ad.as_tensor(part), float(lam))
        total = term if total is None else ad.add(total, term)
    return total
