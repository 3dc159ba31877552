"""Adam optimizer with serializable state for exact training resume."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


class Adam:
    """Standard Adam. Parameters whose grad is None are left untouched,
    including their moment buffers, so a never-gradded parameter stays
    bit-identical across any number of steps."""

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        state = {"t": np.asarray(self.t, dtype=np.int64)}
        for name in self.params:
            state[f"m.{name}"] = np.array(self.m[name], copy=True)
            state[f"v.{name}"] = np.array(self.v[name], copy=True)
        return state

    def load_state_dict(self, state):
        expected = {"t"} | {f"m.{n}" for n in self.params} | {f"v.{n}" for n in self.params}
        if set(state) != expected:
            missing = expected - set(state)
            extra = set(state) - expected
            raise ValidationError(
                f"optimizer state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}"
            )
        self.t = int(np.asarray(state["t"]))
        for name in self.params:
            self.m[name] = np.array(state[f"m.{name}"], copy=True)
            self.v[name] = np.array(state[f"v.{name}"], copy=True)
