"""Thin-plate-spline warping for online reference distortion.

A TPS maps the unit square to itself through a radial-basis expansion
U(r) = r^2 log r over control points plus an affine part.  Images are
warped backwards: for every output pixel the spline gives the source
sample location, which is read bilinearly with border replication.
All of it is plain numpy and deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TARGET_BOX = (-0.1, 1.1)  # displaced control points are clamped into this box


@dataclass(frozen=True)
class TPSParams:
    """Control-point grid (K x 2, normalized [0,1]^2) plus displacements."""

    control_points: np.ndarray
    displacements: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=np.float64)
        disp = np.asarray(self.displacements, dtype=np.float64)
        if cp.ndim != 2 or cp.shape[1] != 2:
            raise ValidationError(f"control_points must be K x 2, got {cp.shape}")
        if cp.shape[0] < 3:
            raise ValidationError("TPS needs at least 3 control points")
        if disp.shape != cp.shape:
            raise ValidationError(
                f"displacements shape {disp.shape} != control points {cp.shape}")
        lo, hi = TARGET_BOX
        disp = np.clip(cp + disp, lo, hi) - cp
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "displacements", disp)

    @property
    def targets(self):
        return self.control_points + self.displacements


def random_tps_params(rng, grid=5, scale=0.08, seed=None):
    """Displacements drawn uniform in [-scale, scale] per axis on a
    grid x grid lattice over [0,1]^2."""
    axis = np.linspace(0.0, 1.0, grid)
    gx, gy = np.meshgrid(axis, axis)
    points = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    disp = rng.uniform(-scale, scale, size=points.shape)
    return TPSParams(points, disp, seed=seed)


def _tps_kernel(r2):
    # U(r) = r^2 log r = 0.5 * r^2 log r^2, with U(0) = 0
    out = np.zeros_like(r2)
    mask = r2 > 0
    out[mask] = 0.5 * r2[mask] * np.log(r2[mask])
    return out


def solve_tps(points, targets):
    """Coefficients of the spline interpolating points -> targets.

    Returns (w, a): radial weights (K x 2) and affine part (3 x 2) of the
    Bookstein system  [[K, P], [P^T, 0]] [w; a] = [targets; 0].
    """
    points = np.asarray(points, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    k = points.shape[0]
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    if np.any(d2[~np.eye(k, dtype=bool)] < 1e-16):
        raise ValidationError("duplicate control points make the TPS system singular")
    km = _tps_kernel(d2)
    p = np.concatenate([np.ones((k, 1)), points], axis=1)
    system = np.zeros((k + 3, k + 3))
    system[:k, :k] = km
    system[:k, k:] = p
    system[k:, :k] = p.T
    rhs = np.concatenate([targets, np.zeros((3, 2))], axis=0)
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"singular TPS system: {exc}") from exc
    return sol[:k], sol[k:]


def eval_tps(w, a, points, query):
    """Evaluate the spline with coefficients (w, a) at query locations (M x 2)."""
    query = np.asarray(query, dtype=np.float64)
    d2 = np.sum((query[:, None, :] - points[None, :, :]) ** 2, axis=2)
    basis = _tps_kernel(d2)
    affine = np.concatenate([np.ones((query.shape[0], 1)), query], axis=1)
    return basis @ w + affine @ a


def tps_warp(image, params):
    """Warp a (C, H, W) image by the spline sending each control point to
    its displaced target; bilinear sampling, borders replicate.

    Output values are clipped to [-1, 1] to absorb bilinear round-off, so
    the normalized-image range is preserved exactly.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValidationError(f"expected (C, H, W) image, got shape {image.shape}")
    c, h, w = image.shape
    wts, aff = solve_tps(params.control_points, params.targets)
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # normalized coordinates with corners pinned to the unit square
    query = np.stack([xs.reshape(-1) / max(w - 1, 1),
                      ys.reshape(-1) / max(h - 1, 1)], axis=1)
    mapped = eval_tps(wts, aff, params.control_points, query)
    src_x = np.clip(mapped[:, 0] * (w - 1), 0.0, w - 1.0)
    src_y = np.clip(mapped[:, 1] * (h - 1), 0.0, h - 1.0)
    x0 = np.floor(src_x).astype(np.intp)
    y0 = np.floor(src_y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = src_x - x0
    fy = src_y - y0
    flat = image.reshape(c, -1).astype(np.float64)
    i00 = y0 * w + x0
    i01 = y0 * w + x1
    i10 = y1 * w + x0
    i11 = y1 * w + x1
    top = flat[:, i00] * (1.0 - fx) + flat[:, i01] * fx
    bottom = flat[:, i10] * (1.0 - fx) + flat[:, i11] * fx
    out = top * (1.0 - fy) + bottom * fy
    out = np.clip(out, -1.0, 1.0)
    return out.reshape(c, h, w).astype(image.dtype)
