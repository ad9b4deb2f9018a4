"""Layers, losses, the LSTM cell, Adam and a finite-difference gradient checker."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, _node, add, as_tensor, matmul, mul, take, unary

PROB_EPS = 1e-7
ELU_ALPHA = 1.0


class Parameter(Tensor):
    """A trainable leaf tensor. ``grad`` accumulates until :meth:`zero_grad`."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True, name=name)

    def zero_grad(self):
        self.grad = None

    def grad_or_zeros(self):
        return np.zeros_like(self.data) if self.grad is None else self.grad


# -- activations -----------------------------------------------------------

def _elu(v):
    return np.where(v > 0, v, ELU_ALPHA * np.expm1(np.minimum(v, 0.0)))


def _elu_grad(v, out):
    return np.where(v > 0, 1.0, out + ELU_ALPHA)


def _sigmoid(v):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * v))


_ACTIVATIONS = {
    "elu": (_elu, _elu_grad),
    "relu": (lambda v: np.maximum(v, 0.0), lambda v, out: (v > 0).astype(np.float64)),
    "sigmoid": (_sigmoid, lambda v, out: out * (1.0 - out)),
    "tanh": (np.tanh, lambda v, out: 1.0 - out * out),
}


def activation(kind, x):
    try:
        fn, dfn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return unary(x, fn, dfn)


def elu(x):
    return activation("elu", x)


def relu(x):
    return activation("relu", x)


def sigmoid(x):
    return activation("sigmoid", x)


def tanh(x):
    return activation("tanh", x)


def linear(W, b, x):
    """``W x + b`` for ``W`` of shape (out, in). ``x`` may be (in,) or (batch, in)."""
    W, b, x = as_tensor(W), as_tensor(b), as_tensor(x)
    if W.data.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ValueError(f"linear shape mismatch: W{W.shape}, b{b.shape}, x{x.shape}")
    if x.data.ndim == 1:
        return add(matmul(W, x), b)
    return add(matmul(x, _transpose(W)), b)


def _transpose(a):
    def backward(g):
        a._accumulate(g.T)

    return _node(a.data.T, (a,), backward)


# -- losses ----------------------------------------------------------------

def bce_loss(x, y):
    """Non-negative binary cross-entropy ``-[y log x + (1-y) log(1-x)]``.

    ``x`` is clamped to ``[1e-7, 1 - 1e-7]`` before the logs.  The clamp
    limits the value only: the derivative is taken at the clamped point and
    passed straight through, so a saturated sigmoid still gets a gradient.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    x = as_tensor(x)
    if x.size != 1:
        raise ValueError(f"bce_loss takes one probability, got shape {x.shape}")
    xc = min(max(float(x.data.reshape(-1)[0]), PROB_EPS), 1.0 - PROB_EPS)
    value = -math.log(xc) if y == 1 else -math.log(1.0 - xc)
    dx = -1.0 / xc if y == 1 else 1.0 / (1.0 - xc)

    def backward(g):
        x._accumulate(np.full(x.shape, g * dx))

    return _node(np.float64(value), (x,), backward)


def log_softmax(logits):
    logits = as_tensor(logits)
    shifted = logits.data - logits.data.max()
    lse = np.log(np.exp(shifted).sum())
    out = shifted - lse
    soft = np.exp(out)

    def backward(g):
        logits._accumulate(g - soft * g.sum())

    return _node(out, (logits,), backward)


def softmax(logits):
    v = np.asarray(as_tensor(logits).data)
    e = np.exp(v - v.max())
    return e / e.sum()


def cross_entropy(logits, cls):
    """``-log softmax(logits)[cls]`` with max-subtraction for stability."""
    logits = as_tensor(logits)
    C = logits.shape[0]
    if C < 2:
        raise ValueError("cross_entropy needs at least two classes")
    if not 0 <= cls < C:
        raise ValueError(f"class {cls} out of range [0, {C})")
    return mul(take(log_softmax(logits), cls), -1.0)


# -- LSTM ------------------------------------------------------------------

GATES = ("i", "f", "o", "c")


@dataclass
class LstmWeights:
    """Per-gate input (D x H), hidden (H x H) and bias (H) parameters."""

    input_size: int
    hidden_size: int
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, input_size, hidden_size, rng=None, scale=0.1, prefix="lstm"):
        w = cls(input_size, hidden_size)
        for gate in GATES:
            for kind, shape in (("W", (input_size, hidden_size)), ("U", (hidden_size, hidden_size)),
                                ("b", (hidden_size,))):
                if rng is None or kind == "b":
                    data = np.zeros(shape)
                else:
                    data = rng.uniform(-scale, scale, size=shape)
                name = f"{prefix}.{kind}_{gate}"
                w.params[f"{kind}_{gate}"] = Parameter(data, name)
        return w

    def __getitem__(self, key):
        return self.params[key]

    def parameters(self):
        return [self.params[f"{k}_{g}"] for g in GATES for k in ("W", "U", "b")]


def lstm_cell(x, h, c, w):
    """One LSTM step. Returns ``(h', c')``.

    Gates ``i, f, o`` are sigmoids and the candidate is a tanh;
    ``c' = f*c + i*cand`` and ``h' = o*tanh(c')``.  The step is a single
    graph node with a hand-derived backward pass.
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    D, H = w.input_size, w.hidden_size
    if x.shape != (D,) or h.shape != (H,) or c.shape != (H,):
        raise ValueError(f"lstm_cell shape mismatch: x{x.shape} h{h.shape} c{c.shape} for D={D}, H={H}")
    params = w.parameters()
    Wall = np.concatenate([w[f"W_{g}"].data for g in GATES], axis=1)
    Uall = np.concatenate([w[f"U_{g}"].data for g in GATES], axis=1)
    ball = np.concatenate([w[f"b_{g}"].data for g in GATES])
    zi, zf, zo, zc = np.split(x.data @ Wall + h.data @ Uall + ball, 4)
    i, f, o = _sigmoid(zi), _sigmoid(zf), _sigmoid(zo)
    u = np.tanh(zc)
    c_new = f * c.data + i * u
    th = np.tanh(c_new)
    h_new = o * th

    def backward(g):
        gh, gc = g[:H], g[H:]
        dc = gc + gh * o * (1.0 - th * th)
        dz = np.concatenate([dc * u * i * (1.0 - i), dc * c.data * f * (1.0 - f),
                             gh * th * o * (1.0 - o), dc * i * (1.0 - u * u)])
        gW = np.multiply.outer(x.data, dz)
        gU = np.multiply.outer(h.data, dz)
        for k, gate in enumerate(GATES):
            cols = slice(k * H, (k + 1) * H)
            w[f"W_{gate}"]._accumulate(gW[:, cols])
            w[f"U_{gate}"]._accumulate(gU[:, cols])
            w[f"b_{gate}"]._accumulate(dz[cols])
        if x.requires_grad:
            x._accumulate(Wall @ dz)
        if h.requires_grad:
            h._accumulate(Uall @ dz)
        if c.requires_grad:
            c._accumulate(dc * f)

    hc = _node(np.concatenate([h_new, c_new]), (x, h, c, *params), backward)
    return take(hc, slice(0, H)), take(hc, slice(H, 2 * H))


# -- optimizer -------------------------------------------------------------

class Adam:
    """Adam with bias correction. ``t`` is incremented before each update."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad_or_zeros() for p in self.params]
        for p, g in zip(self.params, grads):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {p.name!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1.0 - b1 ** self.t)
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p.data = p.data - step_size * m / denom


# -- verification ----------------------------------------------------------

def gradient_check(loss_fn, params, probe_eps=1e-5, analytic=None):
    """Max relative error between backprop and central differences.

    ``loss_fn()`` must build a fresh graph and return a scalar Tensor.
    ``analytic`` overrides the backprop gradients (list of arrays), which is
    how a corrupted gradient can be fed in for fault-injection tests.
    """
    params = list(params)
    for p in params:
        p.grad = None
    if analytic is None:
        loss_fn().backward()
        analytic = [p.grad_or_zeros().copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a = np.asarray(a).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + probe_eps
            up = loss_fn().item()
            flat[k] = orig - probe_eps
            down = loss_fn().item()
            flat[k] = orig
            num = (up - down) / (2.0 * probe_eps)
            err = abs(a[k] - num) / max(abs(a[k]), abs(num), 1e-8)
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(path, params):
    """Write ``name -> {shape, values}`` as JSON.

    ``json`` emits the shortest repr of each double, so a load is bit-exact.
    """
    blob = {p.name: {"shape": list(p.shape), "values": [float(v) for v in p.data.reshape(-1)]}
            for p in params}
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        blob = json.load(fh)
    out = {}
    for name, entry in blob.items():
        vals = np.array(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if math.prod(shape) != vals.size:
            raise ValueError(f"checkpoint entry {name!r}: shape {shape} does not hold {vals.size} values")
        out[name] = vals.reshape(shape)
    return out


def assign(params, arrays):
    for p in params:
        if p.name not in arrays:
            raise KeyError(f"checkpoint has no entry for {p.name!r}")
        if arrays[p.name].shape != p.shape:
            raise ValueError(f"{p.name}: checkpoint shape {arrays[p.name].shape} != {p.shape}")
        p.data = arrays[p.name].copy()
