"""A small reverse-mode differentiation engine.

Every operation builds a node holding its output array, its parents, and a
closure that pushes the node's gradient back to those parents.
"""
import numpy as np

from dfr.errors import DimensionError
from dfr.nn import functional as F


class Tensor:
    """An n-d array that records how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Propagate gradients to every ancestor that requires them."""
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

        if grad is None:
            grad = np.ones_like(self.data)
        self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def conv2d(x, kernels, bias, stride=1, padding=0):
    """2-d cross-correlation over a ``(C, H, W)`` or ``(N, C, H, W)`` input."""
    x, kernels, bias = _wrap(x), _wrap(kernels), _wrap(bias)
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    out, cache = F.conv2d_forward(xd, kernels.data, bias.data, stride, padding)

    def backward(g):
        g4 = g[None] if single else g
        dx, dw, db = F.conv2d_backward(g4, kernels.data, cache)
        x._accumulate(dx[0] if single else dx)
        kernels._accumulate(dw)
        bias._accumulate(db)

    return Tensor(out[0] if single else out, _parents=(x, kernels, bias), _backward=backward)


def maxpool2d(x, size=2, stride=2):
    """Window max; the winning offsets are kept on the closure for backward."""
    x = _wrap(x)
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    out, idx = F.maxpool2d_forward(xd, size, stride)

    def backward(g):
        g4 = g[None] if single else g
        dx = F.maxpool2d_backward(g4, idx, xd.shape, size, stride)
        x._accumulate(dx[0] if single else dx)

    return Tensor(out[0] if single else out, _parents=(x,), _backward=backward)


def relu(x):
    x = _wrap(x)
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return Tensor(np.where(mask, x.data, 0), _parents=(x,), _backward=backward)


def flatten(x, batched=True):
    """Collapse all but the leading (batch) axis; ``batched=False`` collapses everything."""
    x = _wrap(x)
    shape = x.shape
    new_shape = (shape[0], -1) if batched else (-1,)

    def backward(g):
        x._accumulate(g.reshape(shape))

    return Tensor(x.data.reshape(new_shape), _parents=(x,), _backward=backward)


def dense(x, weights, bias):
    """``weights @ x + bias`` for a vector, or row-wise over a ``(N, n)`` batch."""
    x, weights, bias = _wrap(x), _wrap(weights), _wrap(bias)
    single = x.data.ndim == 1
    xd = x.data[None] if single else x.data
    out = F.dense_forward(xd, weights.data, bias.data)

    def backward(g):
        g2 = g[None] if single else g
        dx = g2 @ weights.data
        x._accumulate(dx[0] if single else dx)
        weights._accumulate(g2.T @ xd)
        bias._accumulate(g2.sum(axis=0))

    return Tensor(out[0] if single else out, _parents=(x, weights, bias), _backward=backward)


def mae_loss(pred, target):
    """Mean absolute error over every element; the subgradient at a tie is 0."""
    pred = _wrap(pred)
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.data.dtype)
    if pred.shape != target_data.shape:
        raise DimensionError(f"mae_loss: shapes differ, {pred.shape} vs {target_data.shape}")
    value = F.mae(pred.data, target_data)
    n = pred.size

    def backward(g):
        pred._accumulate(g * np.sign(pred.data - target_data) / n)

    return Tensor(np.asarray(value, dtype=pred.data.dtype), _parents=(pred,), _backward=backward)
