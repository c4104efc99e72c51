"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and, when gradients are enabled, remembers the
tensors it was computed from together with a closure that maps its output
gradient to parent gradients. backward() walks the graph in reverse
topological order and accumulates into .grad (plain ndarrays).

Arrays keep whatever float dtype they carry; the network runs in float32,
while gradient-check tests cast modules to float64 for stable finite
differences.
"""

from contextlib import contextmanager

import numpy as np

from . import backend as K
from .errors import ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

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
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed needs a scalar")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, pg in zip(node._parents, node._backward(node.grad)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg.astype(parent.data.dtype, copy=True)
                else:
                    parent.grad += pg

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul(other, -1.0))
        return add(self, np.negative(other) if not np.isscalar(other) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def apply_op(data, parents, backward) -> Tensor:
    """Create an op result; records the graph only when grads are live."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------
# Python scalars are kept out of the graph (and out of numpy's strong dtype
# promotion) by treating them as captured constants.


def _is_const(x):
    return not isinstance(x, Tensor)


def add(a, b):
    if _is_const(a):
        a, b = b, a
    if _is_const(b):
        a = as_tensor(a)
        c = b if np.isscalar(b) else np.asarray(b)
        data = a.data + c

        def backward(g):
            return (_unbroadcast(g, a.data.shape),)

        return apply_op(data, (a,), backward)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return apply_op(data, (a, b), backward)


def mul(a, b):
    if _is_const(a):
        a, b = b, a
    if _is_const(b):
        a = as_tensor(a)
        c = b if np.isscalar(b) else np.asarray(b)
        data = a.data * c

        def backward(g):
            return (_unbroadcast(g * c, a.data.shape),)

        return apply_op(data, (a,), backward)
    data = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return apply_op(data, (a, b), backward)


def div(a, b):
    if _is_const(b):
        return mul(a, 1.0 / b if np.isscalar(b) else 1.0 / np.asarray(b))
    if _is_const(a):
        a = as_tensor(a)
    data = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return apply_op(data, (a, b), backward)


def power(a, p):
    a = as_tensor(a)
    data = a.data**p

    def backward(g):
        return (g * p * a.data ** (p - 1),)

    return apply_op(data, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / data,)

    return apply_op(data, (a,), backward)


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        return (g * data,)

    return apply_op(data, (a,), backward)


def absolute(a):
    a = as_tensor(a)
    data = np.abs(a.data)

    def backward(g):
        return (g * np.sign(a.data),)

    return apply_op(data, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return (g * data * (1.0 - data),)

    return apply_op(data, (a,), backward)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0).astype(a.data.dtype)

    def backward(g):
        return (g * mask,)

    return apply_op(data, (a,), backward)


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, slope * a.data).astype(a.data.dtype)

    def backward(g):
        return (np.where(mask, g, slope * g),)

    return apply_op(data, (a,), backward)


# -- reductions --------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return apply_op(data, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    s = sum_(a, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / float(count))


# -- shape manipulation -------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return apply_op(data, (a,), backward)


def transpose(a, axes):
    a = as_tensor(a)
    data = np.ascontiguousarray(a.data.transpose(axes))
    inv = np.argsort(axes)

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return apply_op(data, (a,), backward)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=axis))

    return apply_op(data, tuple(tensors), backward)


def narrow(a, axis, start, length):
    a = as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = np.ascontiguousarray(a.data[idx])

    def backward(g):
        gx = np.zeros_like(a.data)
        gx[idx] = g
        return (gx,)

    return apply_op(data, (a,), backward)


def chunk(a, parts, axis):
    a = as_tensor(a)
    n = a.data.shape[axis]
    if n % parts:
        raise ShapeError(f"axis {axis} size {n} not divisible into {parts} chunks")
    step = n // parts
    return [narrow(a, axis, i * step, step) for i in range(parts)]


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def backward(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return apply_op(data, (a, b), backward)


def softmax(a, axis=-1):
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((g - dot) * data,)

    return apply_op(data, (a,), backward)


# -- convolution ---------------------------------------------------------------


def conv2d(x, w, bias=None, pad=0, groups=1):
    """2D correlation, stride 1. w is (C_out, C_in/groups, KH, KW).

    1x1 ungrouped convolutions bypass the kernel backend and run as a single
    matmul; everything else goes through the selected backend.
    """
    x, w = as_tensor(x), as_tensor(w)
    pointwise = w.data.shape[2] == 1 and w.data.shape[3] == 1 and groups == 1
    b_, c_, h_, w_ = x.data.shape
    if pointwise:
        cout = w.data.shape[0]
        wm = w.data.reshape(cout, c_)
        y = (wm @ x.data.reshape(b_, c_, h_ * w_)).reshape(b_, cout, h_, w_)
    else:
        y = K.conv2d_forward(
            np.ascontiguousarray(x.data), np.ascontiguousarray(w.data), pad, groups
        )
    parents = [x, w]
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data.reshape(1, -1, 1, 1)
        parents.append(bias)

    def backward(g):
        g = np.ascontiguousarray(g)
        if pointwise:
            cout = w.data.shape[0]
            wm = w.data.reshape(cout, c_)
            g2 = g.reshape(b_, cout, h_ * w_)
            gx = (
                (wm.T @ g2).reshape(b_, c_, h_, w_) if x.requires_grad else None
            )
            gw = (
                (g2 @ x.data.reshape(b_, c_, h_ * w_).transpose(0, 2, 1))
                .sum(axis=0)
                .reshape(w.data.shape)
                if w.requires_grad
                else None
            )
        else:
            gx = (
                K.conv2d_grad_input(g, w.data, x.data.shape, pad, groups)
                if x.requires_grad
                else None
            )
            gw = (
                K.conv2d_grad_weight(
                    g, np.ascontiguousarray(x.data), w.data.shape, pad, groups
                )
                if w.requires_grad
                else None
            )
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw, gb

    return apply_op(y, tuple(parents), backward)


def maxpool2x2(x):
    """2x2 max pooling, stride 2."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got ({h}, {w})")
    xr = np.ascontiguousarray(
        x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(b, c, h // 2, w // 2, 4)
    am = xr.argmax(axis=-1)
    data = np.take_along_axis(xr, am[..., None], axis=-1)[..., 0]

    def backward(g):
        gr = np.zeros_like(xr)
        np.put_along_axis(gr, am[..., None], g[..., None], axis=-1)
        gx = gr.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (np.ascontiguousarray(gx).reshape(b, c, h, w),)

    return apply_op(data, (x,), backward)


def pixel_unshuffle(x, factor):
    """Rearrange each factor x factor block into channels (space to depth)."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(
            f"spatial dims ({h}, {w}) not divisible by unshuffle factor {factor}"
        )
    if factor == 1:
        return x
    t = reshape(x, (b, c, h // factor, factor, w // factor, factor))
    t = transpose(t, (0, 1, 3, 5, 2, 4))
    return reshape(t, (b, c * factor * factor, h // factor, w // factor))
