"""Stop-gradient attention fusion.

The attention matrix A = softmax(Q K^T / sqrt(d)) is computed entirely
outside the autodiff graph: queries and keys are built from *detached*
token activations and the raw arrays of W_q / W_k.  Gradients therefore
flow only through the value/output path Y = X_q + (A (X_kv W_v)) W_o,
and the query/key projections stay at their initial values for the whole
of training (their .grad is always None).

The cross block normalizes A over its key axis ("row" mode, each query
row sums to 1); the self block over its query axis ("column" mode, each
key column sums to 1).
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .nn import Module, Parameter, xavier_uniform

MODES = ("row", "column")


def attention_matrix(query, key, mode="row", scale=None):
    """Plain-numpy softmax(query @ key^T * scale) over the axis named by
    ``mode`` ("row": keys, axis 2; "column": queries, axis 1).

    query: (N, Lq, d), key: (N, Lk, d).  Stable (max-shifted) softmax;
    every row (or column) sums to 1 up to rounding.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    query = np.asarray(query)
    key = np.asarray(key)
    if query.ndim != 3 or key.ndim != 3 or query.shape[-1] != key.shape[-1]:
        raise ValidationError(
            f"need (N, L, d) query/key with equal d, got {query.shape} / {key.shape}")
    if scale is None:
        scale = 1.0 / math.sqrt(query.shape[-1])
    logits = (query @ key.transpose(0, 2, 1)) * np.asarray(scale, dtype=query.dtype)
    axis = 2 if mode == "row" else 1
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class SgaBlock(Module):
    """One stop-gradient attention block over (N, L, depth) tokens.

    All four projections are depth x d (d = depth // 2) except the output
    projection d x depth.  W_q and W_k participate only in the detached
    attention-matrix computation and never receive gradient.
    """

    def __init__(self, depth, rng, mode="row"):
        super().__init__()
        if mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
        if depth % 2 != 0:
            raise ValidationError(f"token depth must be even, got {depth}")
        self.depth = depth
        self.mode = mode
        d = depth // 2
        self.w_q = Parameter(xavier_uniform(rng, (depth, d), depth, d))
        self.w_k = Parameter(xavier_uniform(rng, (depth, d), depth, d))
        self.w_v = Parameter(xavier_uniform(rng, (depth, d), depth, d))
        self.w_o = Parameter(xavier_uniform(rng, (d, depth), d, depth))

    def attention(self, x_q, x_kv):
        """The detached attention matrix for this block (a plain array)."""
        q = x_q.data @ self.w_q.data
        k = x_kv.data @ self.w_k.data
        return attention_matrix(q, k, mode=self.mode)

    def forward(self, x_q, x_kv=None):
        if x_kv is None:
            x_kv = x_q
        x_q, x_kv = ad.as_tensor(x_q), ad.as_tensor(x_kv)
        for t in (x_q, x_kv):
            if t.ndim != 3 or t.shape[2] != self.depth:
                raise ValidationError(
                    f"expected (N, L, {self.depth}) tokens, got {t.shape}")
        attn = ad.tensor(self.attention(x_q, x_kv))  # constant: no grad flows
        values = ad.matmul(x_kv, self.w_v)
        mixed = ad.matmul(attn, values)
        return ad.add(x_q, ad.matmul(mixed, self.w_o))


class SgaFusion(Module):
    """Reference-into-line token fusion: a cross block (line queries,
    reference keys/values, row-normalized) followed by a self block
    (column-normalized) over the fused tokens."""

    def __init__(self, depth, rng):
        super().__init__()
        self.cross = SgaBlock(depth, rng, mode="row")
        self.self_attn = SgaBlock(depth, rng, mode="column")

    def forward(self, line_tokens, reference_tokens):
        fused = self.cross(line_tokens, reference_tokens)
        return self.self_attn(fused)
