"""Central finite-difference gradient verification.

The checker perturbs raw numpy buffers and re-runs a user-supplied forward
closure, so it is independent of the autodiff tape it is used to verify.
Run it on float64 tensors; float32 has too little headroom for the default
tolerances.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def fd_gradient(loss_fn, array, indices=None, eps=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. ``array`` entries.

    ``loss_fn`` must recompute the scalar loss from the current contents of
    ``array`` (which is perturbed in place and restored).  Returns a dict
    mapping flat index -> derivative estimate.
    """
    flat = array.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    grads = {}
    for i in indices:
        old = flat[i]
        h = eps * max(1.0, abs(float(old)))
        flat[i] = old + h
        up = float(loss_fn())
        flat[i] = old - h
        down = float(loss_fn())
        flat[i] = old
        grads[i] = (up - down) / (2.0 * h)
    return grads


def _as_scalar(value):
    if isinstance(value, Tensor):
        return value.data.item()
    return float(value)


def check_gradients(loss_fn, tensors, max_entries=16, eps=1e-5, rng=None):
    """Compare analytic and finite-difference gradients.

    ``tensors`` maps name -> Tensor (requires_grad leaves).  The loss is
    rebuilt by calling ``loss_fn()`` so in-place data perturbations are
    picked up.  Tensors larger than ``max_entries`` are spot-checked on a
    random subset of entries; small ones exhaustively.

    Returns a dict name -> relative error, where the error is
    ``|fd - analytic| / max(|fd|, |analytic|, 1e-6)`` maximised over the
    checked entries.
    """
    rng = rng or np.random.default_rng(0)
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {}
    for name, t in tensors.items():
        if t.grad is None:
            analytic[name] = np.zeros_like(t.data)
        else:
            analytic[name] = np.array(t.grad, copy=True)

    errors = {}
    for name, t in tensors.items():
        n = t.data.size
        if n <= max_entries:
            indices = range(n)
        else:
            indices = sorted(rng.choice(n, size=max_entries, replace=False).tolist())
        fd = fd_gradient(lambda: _as_scalar(loss_fn()), t.data, indices, eps=eps)
        an_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i, g_fd in fd.items():
            g_an = float(an_flat[i])
            denom = max(abs(g_fd), abs(g_an), 1e-6)
            worst = max(worst, abs(g_fd - g_an) / denom)
        errors[name] = worst
    return errors


def assert_gradients_close(loss_fn, tensors, tol, **kwargs):
    """Raise AssertionError naming the worst tensor if any error exceeds tol."""
    errors = check_gradients(loss_fn, tensors, **kwargs)
    worst_name = max(errors, key=errors.get)
    if errors[worst_name] > tol:
        raise AssertionError(
            f"gradient mismatch on '{worst_name}': rel. error "
            f"{errors[worst_name]:.3e} > {tol:.1e}"
        )
    return errors
