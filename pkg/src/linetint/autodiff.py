"""Reverse-mode automatic differentiation over numpy arrays.

A small tape-based engine: every operation returns a new :class:`Tensor`
holding the numpy result plus a closure that maps the output gradient to
input gradients.  ``Tensor.backward()`` walks the recorded graph in reverse
topological order and accumulates gradients on the leaves.

Dtype follows the input arrays (float32 for training, float64 for gradient
checks); scalars are kept as python numbers so numpy does not upcast.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    """A numpy array with an optional gradient tape entry."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def detach(self):
        """A new leaf sharing this tensor's data, cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- autograd ------------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate gradients of ``self`` w.r.t. every reachable leaf.

        ``grad`` defaults to ones (use on scalar losses).  Interior-node
        gradients are freed as soon as their parents have consumed them.
        """
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
        topo = _toposort(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            node.grad = None  # interior node: freed once parents consumed it

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad=False, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad)


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _sum_to(grad, shape):
    """Reduce a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic ----------------------------------------------------------------


def add(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out_data = a.data + b
        return _make(out_data, (a,), lambda g: (g,))
    if not isinstance(a, Tensor):
        return add(b, a)
    out = a.data + b.data

    def backward(g):
        return (_sum_to(g, a.data.shape) if a.requires_grad else None,
                _sum_to(g, b.data.shape) if b.requires_grad else None)

    return _make(out, (a, b), backward)


def sub(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return _make(a.data - b, (a,), lambda g: (g,))
    if not isinstance(a, Tensor):
        b = as_tensor(b)
        return _make(a - b.data, (b,), lambda g: (-g,))
    out = a.data - b.data

    def backward(g):
        return (_sum_to(g, a.data.shape) if a.requires_grad else None,
                _sum_to(-g, b.data.shape) if b.requires_grad else None)

    return _make(out, (a, b), backward)


def mul(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        return _make(a.data * b, (a,), lambda g: (g * b,))
    if not isinstance(a, Tensor):
        return mul(b, a)
    out = a.data * b.data

    def backward(g):
        return (_sum_to(g * b.data, a.data.shape) if a.requires_grad else None,
                _sum_to(g * a.data, b.data.shape) if b.requires_grad else None)

    return _make(out, (a, b), backward)


def div(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return mul(a, 1.0 / b)
    if not isinstance(a, Tensor):
        b = as_tensor(b)
        out = a / b.data
        return _make(out, (b,), lambda g: (-g * a / (b.data * b.data),))
    b = as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = _sum_to(g / b.data, a.data.shape) if a.requires_grad else None
        gb = (_sum_to(-g * a.data / (b.data * b.data), b.data.shape)
              if b.requires_grad else None)
        return ga, gb

    return _make(out, (a, b), backward)


def power(a, exponent):
    a = as_tensor(a)
    out = a.data ** exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _make(out, (a,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            ga = _sum_to(ga, a.data.shape)
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            gb = _sum_to(gb, b.data.shape)
        return ga, gb

    return _make(out, (a, b), backward)


# -- elementwise nonlinearities --------------------------------------------------


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


def abs_(a):
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


# -- reductions ----------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk, a.data.shape).copy(),)

    return _make(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else _axis_size(a.data.shape, axis)
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def _axis_size(shape, axis):
    if isinstance(axis, int):
        axis = (axis,)
    n = 1
    for ax in axis:
        n *= shape[ax]
    return n


def max_(a, axis=None, keepdims=False):
    """Maximum along a single ``axis`` (or all); gradient routes to the
    first argmax on ties.  Reshape first for multi-axis maxima."""
    a = as_tensor(a)
    if isinstance(axis, (tuple, list)):
        raise ValidationError("max_ supports a single axis; reshape first")
    out = a.data.max(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            first = np.zeros(a.data.shape, dtype=bool)
            first.reshape(-1)[np.argmax(a.data)] = True
            return (g * first,)
        gk = g if keepdims else np.expand_dims(g, axis)
        idx = np.argmax(a.data, axis=axis)
        first = np.zeros(a.data.shape, dtype=bool)
        np.put_along_axis(first, np.expand_dims(idx, axis), True, axis=axis)
        return (gk * first,)

    return _make(out, (a,), backward)


def softmax(a, axis):
    """Numerically stable softmax along ``axis`` (shift is gradient-exact)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), backward)


# -- shape surgery ---------------------------------------------------------------


def reshape(a, *shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    out = a.data.transpose(axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)
    return _make(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), backward)


def take(a, idx):
    """Basic (non-fancy) indexing with gradient scatter."""
    a = as_tensor(a)
    out = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[idx] += g
        return (ga,)

    return _make(out, (a,), backward)


# -- convolution and resampling ---------------------------------------------------


def _im2col(x, kh, kw, stride, padding):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    cols = view.reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(gcols, xshape, kh, kw, stride, padding, oh, ow):
    n, c, h, w = xshape
    g = gcols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    gx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += g[:, :, i, j]
    if padding:
        return gx[:, :, padding:padding + h, padding:padding + w]
    return gx


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D convolution (cross-correlation), NCHW layout.

    ``weight`` has shape (out, in, kh, kw).  Backward reconstructs input
    gradients through col2im so strides and padding round-trip exactly.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ValidationError(f"conv2d expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.data.shape
    o, c2, kh, kw = weight.data.shape
    if c != c2:
        raise ValidationError(f"conv2d channel mismatch: input {c}, kernel {c2}")
    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (gmat.T @ cols).reshape(weight.data.shape)
        if x.requires_grad:
            gcols = gmat @ wmat
            gx = _col2im(gcols, x.data.shape, kh, kw, stride, padding, oh, ow)
        if bias is not None and bias.requires_grad:
            gb = gmat.sum(axis=0)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make(out, parents, backward)


def upsample_nearest2(x):
    """Nearest-neighbour 2x upsampling; backward sums 2x2 blocks."""
    x = as_tensor(x)
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(g):
        n, c, h2, w2 = g.shape
        return (g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)),)

    return _make(out, (x,), backward)


def _interp_matrix(n_out, n_in, dtype):
    """Row-stochastic 1-D bilinear interpolation matrix (half-pixel centers)."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    if n_in == 1:
        m[:, 0] = 1.0
    else:
        coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        coords = np.clip(coords, 0.0, n_in - 1.0)
        lo = np.floor(coords).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = coords - lo
        rows = np.arange(n_out)
        np.add.at(m, (rows, lo), 1.0 - frac)
        np.add.at(m, (rows, hi), frac)
    return m.astype(dtype, copy=False)


def resize_bilinear(x, out_hw):
    """Bilinear resize of NCHW maps; an exactly linear operator, so the
    backward pass is its transpose.  Same-size resize is the identity."""
    x = as_tensor(x)
    oh, ow = out_hw
    n, c, h, w = x.data.shape
    rh = _interp_matrix(oh, h, x.data.dtype)
    rw = _interp_matrix(ow, w, x.data.dtype)
    out = rh @ x.data @ rw.T

    def backward(g):
        return (rh.T @ g @ rw,)

    return _make(out, (x,), backward)
