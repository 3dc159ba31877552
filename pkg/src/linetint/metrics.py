"""Image-quality metrics and the evaluation harness.

PSNR uses MAX = 2 (the [-1, 1] value range) and caps at 99 dB for
identical images.  MS-SSIM is the standard 5-scale variant (Gaussian
window 11, sigma 1.5, canonical scale weights) computed on the luminance
of the [-1, 1] -> [0, 1] remapped images; when an image is too small for
five dyadic scales the trailing scales are dropped and the weights
renormalized.

``evaluate`` scores a model over a dataset in self-reference mode
(reference = the image's own ground truth) or random-reference mode
(seeded pairing).  When a feature extractor is supplied the report also
carries per-image feature-space perceptual distances ("lpips" column) and
a set-level Frechet distance ("fid") computed in that extractor's feature
space; without one those fields are reported unavailable, never invented.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import autodiff as ad
from .config import STREAM_EVAL_PAIRING, derive_rng
from .data import LUMA_WEIGHTS, validate_image
from .errors import ValidationError

PSNR_CAP = 99.0
PSNR_MAX = 2.0  # dynamic range of [-1, 1] images

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b):
    """10 log10(MAX^2 / MSE) in dB, capped at 99; symmetric."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(PSNR_MAX ** 2 / mse), PSNR_CAP)


def _gaussian_window():
    half = (WINDOW_SIZE - 1) / 2.0
    coords = np.arange(WINDOW_SIZE, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * WINDOW_SIGMA ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(image, window):
    """2-D correlation, valid region only."""
    view = np.lib.stride_tricks.sliding_window_view(image, window.shape)
    return np.einsum("ijkl,kl->ij", view, window)


def _to_luminance01(image):
    image = validate_image(image)
    x = (np.asarray(image, dtype=np.float64) + 1.0) / 2.0
    if image.shape[0] == 3:
        r, g, b = LUMA_WEIGHTS
        x = x[0] * r + x[1] * g + x[2] * b
    else:
        x = x[0]
    return np.clip(x, 0.0, 1.0)


def _ssim_scale(x, y, window):
    """(mean luminance*cs, mean cs) over the valid windows of one scale."""
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    sigma_x = _filter_valid(x * x, window) - mu_x ** 2
    sigma_y = _filter_valid(y * y, window) - mu_y ** 2
    sigma_xy = _filter_valid(x * y, window) - mu_x * mu_y
    cs_map = (2.0 * sigma_xy + c2) / (sigma_x + sigma_y + c2)
    l_map = (2.0 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    return float(np.mean(l_map * cs_map)), float(np.mean(cs_map))


def _avg_pool2(x):
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return (x[0::2, 0::2] + x[0::2, 1::2] + x[1::2, 0::2] + x[1::2, 1::2]) / 4.0


def ms_ssim(a, b):
    """Multi-scale SSIM in [0, 1] of two (C, H, W) images in [-1, 1]."""
    x, y = _to_luminance01(a), _to_luminance01(b)
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    scales = 0
    size = min(x.shape)
    while scales < len(MSSSIM_WEIGHTS) and size >= WINDOW_SIZE:
        scales += 1
        size //= 2
    if scales == 0:
        raise ValidationError(
            f"images must be at least {WINDOW_SIZE}px on a side, got {x.shape}")
    weights = np.asarray(MSSSIM_WEIGHTS[:scales], dtype=np.float64)
    weights /= weights.sum()
    window = _gaussian_window()
    value = 1.0
    for level in range(scales):
        ssim_mean, cs_mean = _ssim_scale(x, y, window)
        if level < scales - 1:
            value *= max(cs_mean, 0.0) ** weights[level]
            x, y = _avg_pool2(x), _avg_pool2(y)
        else:
            value *= max(ssim_mean, 0.0) ** weights[level]
    return float(np.clip(value, 0.0, 1.0))


# -- feature-space metrics (optional extractor) ---------------------------------

def embed_images(images, extractor):
    """Global-average-pooled final-stage features, one row per image."""
    rows = []
    for img in images:
        feats = extractor.features(ad.tensor(np.asarray(img)[None]))
        rows.append(feats[-1].data[0].mean(axis=(1, 2)))
    return np.stack(rows).astype(np.float64)


def frechet_distance(feats_a, feats_b, eps=1e-6):
    """Frechet distance between Gaussian fits of two feature sets (n >= 2)."""
    if len(feats_a) < 2 or len(feats_b) < 2:
        raise ValidationError("Frechet distance needs at least 2 images per set")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    covmean = scipy.linalg.sqrtm(cov_a @ cov_b)
    if not np.isfinite(covmean).all():
        jitter = eps * np.eye(cov_a.shape[0])
        covmean = scipy.linalg.sqrtm((cov_a + jitter) @ (cov_b + jitter))
    covmean = np.real(covmean)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b)
                  - 2.0 * np.trace(covmean))
    # sqrtm noise on near-rank-deficient covariances can dip slightly below 0
    return max(value, 0.0)


def perceptual_distance(a, b, extractor):
    """Mean squared distance between channel-normalized features, averaged
    over the extractor's layers (uniform layer/channel weights)."""
    fa = extractor.features(ad.tensor(np.asarray(a)[None]))
    fb = extractor.features(ad.tensor(np.asarray(b)[None]))
    total = 0.0
    for ta, tb in zip(fa, fb):
        xa, xb = ta.data[0].astype(np.float64), tb.data[0].astype(np.float64)
        na = xa / (np.sqrt((xa ** 2).sum(axis=0, keepdims=True)) + 1e-10)
        nb = xb / (np.sqrt((xb ** 2).sum(axis=0, keepdims=True)) + 1e-10)
        total += float(((na - nb) ** 2).sum(axis=0).mean())
    return total / len(fa)


# -- evaluation harness ----------------------------------------------------------

EVAL_MODES = ("self", "random")


@dataclass(frozen=True)
class EvalReport:
    mode: str
    rows: list        # per-image dicts, deterministic (sorted-name) order
    aggregates: dict  # means of rows, plus optional fid
    config: dict      # provenance snapshot


def _resolve_lines(dataset, line_fn):
    if line_fn is not None:
        return lambda i: np.asarray(line_fn(dataset.color(i)))
    if getattr(dataset, "has_sketches", False):
        return dataset.sketch
    raise ValidationError(
        "evaluation needs line drawings: provide a line extractor or a "
        "dataset with a sketch/ directory")


def evaluate(model, dataset, mode="self", extractor=None, line_fn=None,
             seed=0, config=None):
    """Score ``model`` (a callable (line, reference) -> image) over the
    dataset.  Self mode references each image with its own ground truth;
    random mode draws a different image as reference, seeded."""
    if mode not in EVAL_MODES:
        raise ValidationError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    n = len(dataset)
    if n == 0:
        raise ValidationError("evaluation needs at least one image")
    if mode == "random" and n < 2:
        raise ValidationError("random-reference mode needs at least 2 images")
    lines = _resolve_lines(dataset, line_fn)
    rng = derive_rng(seed, STREAM_EVAL_PAIRING)

    rows, outputs, references = [], [], []
    for i in range(n):
        gt = dataset.color(i)
        if mode == "self":
            ref = gt
        else:
            j = int(rng.integers(0, n - 1))
            j = j + 1 if j >= i else j
            ref = dataset.color(j)
        out = np.asarray(model(lines(i), ref))
        validate_image(out, channels=3)
        row = {
            "name": dataset.names[i] if hasattr(dataset, "names") else str(i),
            "psnr": psnr(out, gt),
            "ms_ssim": ms_ssim(out, gt),
        }
        if extractor is not None:
            row["lpips"] = perceptual_distance(out, gt, extractor)
        rows.append(row)
        outputs.append(out)
        references.append(ref)

    aggregates = {
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ms_ssim": float(np.mean([r["ms_ssim"] for r in rows])),
    }
    if extractor is not None:
        aggregates["lpips"] = float(np.mean([r["lpips"] for r in rows]))
        if n >= 2:
            aggregates["fid"] = frechet_distance(
                embed_images(outputs, extractor),
                embed_images(references, extractor))
        else:
            aggregates["fid"] = None
    else:
        aggregates["lpips"] = None
        aggregates["fid"] = None
    return EvalReport(mode=mode, rows=rows, aggregates=aggregates,
                      config=dict(config or {}))


def write_report(report, out_dir):
    """Emit rows as CSV and aggregates as JSON; returns (csv_path, json_path)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "eval_rows.csv"
    json_path = out_dir / "eval_summary.json"
    columns = list(report.rows[0].keys()) if report.rows else ["name"]
    lines = [",".join(columns)]
    for row in report.rows:
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    csv_path.write_text("\n".join(lines) + "\n")
    summary = {
        "mode": report.mode,
        "images": len(report.rows),
        "aggregates": {k: (None if v is None else round(float(v), 6))
                       for k, v in report.aggregates.items()},
        "unavailable": sorted(k for k, v in report.aggregates.items() if v is None),
        "config": report.config,
    }
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def _format_cell(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)
