"""A minimal reverse-mode autodiff over numpy arrays.

Only the operations the retrieval networks need are provided: dense
algebra with broadcasting, 3x3 same-padded convolution, 2x2 max pooling,
pointwise nonlinearities and a few fused, numerically safe log-domain
helpers. Gradients are exact; they are checked against central finite
differences in the test suite.
"""
from __future__ import annotations

import logging
from typing import Callable, Iterable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires grad."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Iterable[Tensor], backward: Callable) -> Tensor:
    parents = tuple(parents)
    rg = any(p.requires_grad for p in parents)
    return Tensor(data, rg, parents if rg else (), backward if rg else None)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2 * g * a.data,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise FloatingPointError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1 - out),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), stable for large |a|."""
    x = a.data
    out = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
    return _make(out, (a,), lambda g: (g * _sigmoid(x),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e))


def hinge(a: Tensor) -> Tensor:
    """max(a, 0)"""
    return relu(a)


# ---------------------------------------------------------------- reductions / shape


def tsum(a: Tensor, axis=None) -> Tensor:
    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), back)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def index(a: Tensor, idx) -> Tensor:
    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), back)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, sizes, axis=axis)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# ---------------------------------------------------------------- fused heads


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax of a 2-D tensor."""
    z = a.data - a.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    sm = np.exp(out)
    return _make(out, (a,), lambda g: (g - sm * g.sum(axis=1, keepdims=True),))


def softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)
    return _make(out, (a,), lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),))


def pair_distance(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise Euclidean distance ||a_i - b_i||; the gradient at 0 is taken as 0."""
    a, b = as_tensor(a), as_tensor(b)
    diff = a.data - b.data
    dist = np.sqrt((diff * diff).sum(axis=1))

    def back(g):
        safe = np.where(dist > 0, dist, 1.0)
        unit = np.where((dist > 0)[:, None], diff / safe[:, None], 0.0)
        ga = g[:, None] * unit
        return ga, -ga

    return _make(dist, (a, b), back)


# ---------------------------------------------------------------- convolution


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 (or any odd k) convolution, stride 1, zero 'same' padding. x: NCHW, w: OCkk."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n c h w k k
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)
    wmat = w.data.reshape(o, c * k * k)
    out = (cols @ wmat.T + b.data).reshape(n, h, wd, o).transpose(0, 3, 1, 2)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * h * wd, o)
        gw = (gm.T @ cols).reshape(w.shape)
        gb = gm.sum(axis=0)
        gx = None
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(n, h, wd, c, k, k)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + h, j : j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad : pad + h, pad : pad + wd]
        return gx, gw, gb

    return _make(np.ascontiguousarray(out), (x, w, b), back)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pool with stride 2; odd trailing rows/columns are dropped."""
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    xc = x.data[:, :, : h2 * 2, : w2 * 2]
    blocks = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, : h2 * 2, : w2 * 2] = gb.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, h2 * 2, w2 * 2
        )
        return (gx,)

    return _make(out, (x,), back)


# ---------------------------------------------------------------- gradients


class Gradients(dict):
    """Parameter name -> gradient array. ``disconnected`` lists names with no path to the loss."""

    disconnected: list


def backprop(loss: Tensor, params: Mapping[str, Tensor]) -> Gradients:
    """Exact reverse-mode gradients of a scalar ``loss`` for every named parameter.

    Parameters the loss does not depend on get a zero gradient and are listed
    in ``.disconnected``.
    """
    for p in params.values():
        p.grad = None
    loss.backward()
    out = Gradients()
    out.disconnected = []
    for name, p in params.items():
        if p.grad is None:
            out[name] = np.zeros_like(p.data)
            out.disconnected.append(name)
        else:
            out[name] = p.grad
        p.grad = None
    if out.disconnected:
        logger.debug("parameters without gradient path: %s", ", ".join(out.disconnected))
    return out
