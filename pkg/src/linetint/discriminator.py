"""Conditional patch discriminator with spectral normalization.

Every conv weight except the final projection is divided by an estimate of
its largest singular value.  The estimate comes from one step of power
iteration per forward pass (running u/v vectors kept as buffers, updated
outside the autodiff graph); the division itself happens in-graph so
gradients see the normalized weight.  The discriminator scores the
(line drawing, color image) pair, so colorizations are judged against
the line art they were conditioned on.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .nn import Conv2d, Module, ModuleList, Parameter, kaiming_normal


def power_iteration(wmat, u, iters=1, eps=1e-12):
    """Refine the leading left/right singular vectors of a 2-D matrix.

    One iteration is v = normalize(W^T u), u = normalize(W v).  Returns the
    refined (u, v); with enough iterations u^T W v converges to sigma_max.
    """
    wmat = np.asarray(wmat)
    if wmat.ndim != 2:
        raise ValidationError(f"power_iteration needs a 2-D matrix, got {wmat.shape}")
    u = np.asarray(u)
    v = None
    for _ in range(max(1, iters)):
        v = wmat.T @ u
        v = v / (np.linalg.norm(v) + eps)
        u = wmat @ v
        u = u / (np.linalg.norm(u) + eps)
    return u, v


def estimate_sigma(wmat, u, v):
    """Rayleigh estimate u^T W v of the largest singular value."""
    return float(u @ np.asarray(wmat) @ v)


class SpectralNormConv2d(Module):
    """Conv2d whose weight is scaled to unit spectral norm at each forward.

    The weight is viewed as (out, in*kh*kw).  In train mode the u/v buffers
    take ``power_iterations`` refinement steps before sigma is formed; in
    eval mode they are left untouched, which keeps repeated forwards (and
    finite-difference probes) deterministic.
    """

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0,
                 bias=True, power_iterations=1, dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.power_iterations = power_iterations
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(
            kaiming_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype=dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None
        u = rng.standard_normal(out_ch).astype(dtype)
        u = u / (np.linalg.norm(u) + 1e-12)
        wmat = self.weight.data.reshape(out_ch, -1)
        # burn-in so the estimate is already converged at the first step
        u, v = power_iteration(wmat, u, iters=15)
        self.register_buffer("u", u.astype(dtype))
        self.register_buffer("v", v.astype(dtype))

    def sigma(self):
        """Current in-graph spectral-norm estimate (a (1, 1) tensor)."""
        out_ch = self.weight.shape[0]
        wmat_np = self.weight.data.reshape(out_ch, -1)
        if self.training and self.power_iterations > 0:
            u, v = power_iteration(
                wmat_np, self._buffers["u"], iters=self.power_iterations)
            self._buffers["u"] = u.astype(wmat_np.dtype)
            self._buffers["v"] = v.astype(wmat_np.dtype)
        u = self._buffers["u"]
        v = self._buffers["v"]
        wmat = ad.reshape(self.weight, (out_ch, -1))
        return ad.matmul(ad.matmul(ad.tensor(u[None, :]), wmat), ad.tensor(v[:, None]))

    def forward(self, x):
        sigma = ad.reshape(self.sigma(), (1, 1, 1, 1))
        normalized = ad.div(self.weight, sigma)
        return ad.conv2d(x, normalized, self.bias,
                         stride=self.stride, padding=self.padding)


class DiscriminatorNet(Module):
    """score_map = D(line (N,1,H,W), image (N,3,H,W)).

    Four spectrally normalized stride-2 4x4 convs with LeakyReLU(0.2), then
    a plain (un-normalized) 3x3 projection to one patch-score channel.
    No sigmoid: least-squares GAN losses consume the raw scores.
    """

    def __init__(self, rng, base=64, in_channels=4, power_iterations=1):
        super().__init__()
        chans = [base, 2 * base, 4 * base, 8 * base]
        layers = []
        prev = in_channels
        for c in chans:
            layers.append(SpectralNormConv2d(
                prev, c, 4, rng, stride=2, padding=1,
                power_iterations=power_iterations))
            prev = c
        self.features = ModuleList(layers)
        self.head = Conv2d(prev, 1, 3, rng, stride=1, padding=1)

    def forward(self, line, image):
        line, image = ad.as_tensor(line), ad.as_tensor(image)
        if line.ndim != 4 or line.shape[1] != 1:
            raise ValidationError(f"line must be (N, 1, H, W), got {line.shape}")
        if image.ndim != 4 or image.shape[1] != 3:
            raise ValidationError(f"image must be (N, 3, H, W), got {image.shape}")
        if line.shape[2:] != image.shape[2:] or line.shape[0] != image.shape[0]:
            raise ValidationError(
                f"line {line.shape} and image {image.shape} must share N, H, W")
        x = ad.concat([line, image], axis=1)
        for layer in self.features:
            x = ad.leaky_relu(layer(x), 0.2)
        return self.head(x)
