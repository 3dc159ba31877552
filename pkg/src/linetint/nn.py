"""Module/parameter plumbing and the layers shared by every network.

Parameters live in a tree of :class:`Module` objects; ``named_parameters``
walks the tree producing stable dotted paths, which double as checkpoint
keys.  Non-trained state (batch-norm statistics, power-iteration vectors)
is registered as buffers and serialized the same way.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


class Module:
    def __init__(self):
        self.training = True
        self._buffers = {}

    # -- tree traversal ------------------------------------------------------
    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, ModuleList):
                for i, sub in enumerate(value):
                    yield f"{name}.{i}", sub

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield (prefix + name, value)
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array)

    def named_buffers(self, prefix=""):
        for name, arr in self._buffers.items():
            yield (prefix + name, arr)
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    # -- modes ---------------------------------------------------------------
    def train(self, mode=True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    # -- serialization ---------------------------------------------------------
    def state_dict(self):
        state = {name: np.array(p.data, copy=True) for name, p in self.named_parameters()}
        for name, arr in self.named_buffers():
            state[name] = np.array(arr, copy=True)
        return state

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        own_buffers = list(self.named_buffers())
        expected = set(params) | {n for n, _ in own_buffers}
        missing = expected - set(state)
        extra = set(state) - expected
        if missing or extra:
            raise ValidationError(
                f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}"
            )
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValidationError(
                    f"shape mismatch for '{name}': {arr.shape} vs {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype, copy=True)
        self._load_buffers(state, prefix="")

    def _load_buffers(self, state, prefix):
        for name in self._buffers:
            self._buffers[name] = np.array(state[prefix + name], copy=True)
        for name, child in self._children():
            child._load_buffers(state, prefix + name + ".")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList:
    def __init__(self, modules=()):
        self._items = list(modules)

    def append(self, module):
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)


# -- initialisers -------------------------------------------------------------


def kaiming_normal(rng, shape, fan_in, gain=math.sqrt(2.0), dtype=np.float32):
    std = gain / math.sqrt(fan_in)
    return rng.normal(0.0, std, size=shape).astype(dtype)


def xavier_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# -- layers --------------------------------------------------------------------


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0,
                 bias=True, gain=math.sqrt(2.0), dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(
            kaiming_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in, gain, dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias,
                         stride=self.stride, padding=self.padding)


class Linear(Module):
    """Row-vector convention: y = x @ W + b with W of shape (in, out)."""

    def __init__(self, in_dim, out_dim, rng, bias=True, dtype=np.float32):
        super().__init__()
        self.weight = Parameter(xavier_uniform(rng, (in_dim, out_dim), in_dim, out_dim, dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def forward(self, x):
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return out


class BatchNorm2d(Module):
    """Per-channel batch normalisation over (N, H, W).

    Train mode normalises by biased batch statistics and folds them into the
    running estimates (momentum update, outside the autodiff graph); eval
    mode normalises by the running estimates as constants.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x):
        c = x.shape[1]
        if self.training:
            mu = ad.mean(x, axis=(0, 2, 3), keepdims=True)
            centered = ad.sub(x, mu)
            var = ad.mean(ad.mul(centered, centered), axis=(0, 2, 3), keepdims=True)
            m = self.momentum
            self._buffers["running_mean"] = (
                (1 - m) * self._buffers["running_mean"] + m * mu.data.reshape(c))
            self._buffers["running_var"] = (
                (1 - m) * self._buffers["running_var"] + m * var.data.reshape(c))
            inv = ad.div(1.0, ad.sqrt(ad.add(var, self.eps)))
            xn = ad.mul(centered, inv)
        else:
            rm = self._buffers["running_mean"].reshape(1, c, 1, 1)
            rv = self._buffers["running_var"].reshape(1, c, 1, 1)
            scale = 1.0 / np.sqrt(rv + self.eps)
            xn = ad.mul(ad.sub(x, Tensor(rm)), Tensor(scale))
        gamma = ad.reshape(self.gamma, (1, c, 1, 1))
        beta = ad.reshape(self.beta, (1, c, 1, 1))
        return ad.add(ad.mul(xn, gamma), beta)


def cast_module(module, dtype):
    """Cast every parameter and buffer to ``dtype`` in place (returns the
    module).  Mainly for float64 finite-difference checks of micro-nets."""
    for _, p in module.named_parameters():
        p.data = p.data.astype(dtype)

    def _cast(m):
        for name in m._buffers:
            m._buffers[name] = m._buffers[name].astype(dtype)
        for _, child in m._children():
            _cast(child)

    _cast(module)
    return module
