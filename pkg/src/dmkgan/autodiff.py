"""Reverse-mode differentiation over a dynamically recorded graph.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure that pushes the output gradient back to them.  Calling
``loss.backward()`` walks the graph in reverse topological order.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None, _check=True):
        arr = np.array(data, dtype=np.float64)
        if _check and not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in tensor {name or ''}".rstrip())
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, _check=False)

    def __repr__(self):
        label = f"{self.name}, " if self.name else ""
        return f"Tensor({label}shape={self.shape})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = {id(self)}
        stack = [(self, iter(self._parents))]
        while stack:
            node, parents = stack[-1]
            for p in parents:
                if p._backward is not None and id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, iter(p._parents)))
                    break
            else:
                stack.pop()
                order.append(node)
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior gradients are not needed after propagation
                if node is not self:
                    node.grad = None

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    # hot path: skip __init__ validation for op outputs
    t = object.__new__(Tensor)
    t.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
    t.grad = None
    t.requires_grad = any(p.requires_grad for p in parents)
    t.name = None
    t._parents = parents
    t._backward = backward if t.requires_grad else None
    return t


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def matmul(a, b):
    """Matrix product for 1-D and 2-D operands (numpy ``@`` semantics)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ValueError(f"matmul supports 1-D/2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"shape mismatch in matmul: {a.shape} @ {b.shape}")

    def backward(g):
        ad, bd = a.data, b.data
        if a.requires_grad:
            if bd.ndim == 1:
                ga = np.multiply.outer(g, bd)
            else:
                ga = g @ bd.T
            a._accumulate(ga)
        if b.requires_grad:
            if ad.ndim == 1:
                gb = np.multiply.outer(ad, g)
            else:
                gb = ad.T @ g
            b._accumulate(gb)

    return _node(a.data @ b.data, (a, b), backward)


def dot(a, b):
    """Inner product of two 1-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.data.ndim != 1:
        raise ValueError(f"dot needs equal 1-D shapes, got {a.shape} and {b.shape}")
    return matmul(a, b)


def tensor_sum(a, axis=None):
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _node(a.data.sum(axis=axis), (a,), backward)


def mean(a):
    a = as_tensor(a)
    return mul(tensor_sum(a), 1.0 / a.size)


def reshape(a, shape):
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def take(a, idx):
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        if isinstance(idx, (int, slice)):
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)

    return _node(a.data[idx], (a,), backward)


def stack(tensors):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(g[i])

    return _node(np.stack([t.data for t in tensors]), tuple(tensors), backward)


def concat(tensors):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[0] for t in tensors])[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, sizes)):
            if t.requires_grad:
                t._accumulate(part)

    return _node(np.concatenate([t.data for t in tensors]), tuple(tensors), backward)


def log(a):
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g / a.data)

    return _node(np.log(a.data), (a,), backward)


def clip(a, lo, hi):
    """Clamp values; gradient passes only where the input was inside [lo, hi]."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a._accumulate(g * inside)

    return _node(np.clip(a.data, lo, hi), (a,), backward)


def unary(a, fn, dfn):
    """Elementwise op given value ``fn(x)`` and derivative ``dfn(x, y)``."""
    a = as_tensor(a)
    out = fn(a.data)

    def backward(g):
        a._accumulate(g * dfn(a.data, out))

    return _node(out, (a,), backward)
