"""A small array-valued reverse-mode differentiation tape.

Every op takes ``Var`` or plain arrays and returns a ``Var``. Plain arrays
become constants, so the same network code serves both inference and
gradient evaluation. The LSTM recurrence is a single fused op with a
hand-written backward pass (see :func:`ergan.neural.layers.lstm_sequence`);
everything else is composed from the elementwise ops here.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from .params import ParameterStore


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return take(self, index)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x, requires_grad=False)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _node(value, parents, backward_fn):
    out = Var(value, parents)
    if out.requires_grad:
        out.backward_fn = backward_fn
    else:
        out.parents = ()
    return out


def _accumulate(var: Var, g: np.ndarray) -> None:
    if not var.requires_grad:
        return
    g = _unbroadcast(g, var.value.shape)
    var.grad = g.copy() if var.grad is None else var.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.value + b.value, (a, b), backward)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.value - b.value, (a, b), backward)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def backward(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _node(a.value * b.value, (a, b), backward)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Var:
    x = as_var(x)
    y = stable_sigmoid(x.value)

    def backward(g):
        _accumulate(x, g * y * (1.0 - y))

    return _node(y, (x,), backward)


def tanh(x) -> Var:
    x = as_var(x)
    y = np.tanh(x.value)

    def backward(g):
        _accumulate(x, g * (1.0 - y * y))

    return _node(y, (x,), backward)


def log(x) -> Var:
    x = as_var(x)

    def backward(g):
        _accumulate(x, g / x.value)

    return _node(np.log(x.value), (x,), backward)


def absolute(x) -> Var:
    x = as_var(x)

    def backward(g):
        _accumulate(x, g * np.sign(x.value))

    return _node(np.abs(x.value), (x,), backward)


def clip(x, lo: float, hi: float) -> Var:
    """Clamp values; the gradient is zero where clamping is active."""
    x = as_var(x)
    inside = (x.value >= lo) & (x.value <= hi)

    def backward(g):
        _accumulate(x, g * inside)

    return _node(np.clip(x.value, lo, hi), (x,), backward)


# -- reductions and reshaping -------------------------------------------------

def total(x, axis=None) -> Var:
    x = as_var(x)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.value.shape))

    return _node(x.value.sum(axis=axis), (x,), backward)


def mean(x, axis=None) -> Var:
    x = as_var(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(total(x, axis=axis), 1.0 / n)


def variance(x, axis) -> Var:
    """Population variance (divisor n) along ``axis``."""
    x = as_var(x)
    mu = mean(x, axis=axis)
    d = sub(x, expand(mu, axis))
    return mean(mul(d, d), axis=axis)


def expand(x, axis) -> Var:
    x = as_var(x)

    def backward(g):
        _accumulate(x, g.squeeze(axis))

    return _node(np.expand_dims(x.value, axis), (x,), backward)


def reshape(x, shape) -> Var:
    x = as_var(x)
    orig = x.value.shape

    def backward(g):
        _accumulate(x, g.reshape(orig))

    return _node(x.value.reshape(shape), (x,), backward)


def take(x, index) -> Var:
    x = as_var(x)

    def backward(g):
        full = np.zeros_like(x.value)
        np.add.at(full, index, g)
        _accumulate(x, full)

    return _node(x.value[index], (x,), backward)


def concat(parts, axis=-1) -> Var:
    parts = [as_var(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(sl)])

    return _node(np.concatenate([p.value for p in parts], axis=axis), parts, backward)


def dense(x, weights, bias) -> Var:
    """Affine map over the last axis: ``x @ weights.T + bias``."""
    x, w, b = as_var(x), as_var(weights), as_var(bias)
    if x.value.shape[-1] != w.value.shape[1] or w.value.shape[0] != b.value.shape[0]:
        raise ValueError(
            f"dense shape mismatch: input {x.value.shape}, weights {w.value.shape}, "
            f"bias {b.value.shape}"
        )

    def backward(g):
        _accumulate(x, g @ w.value)
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.value.reshape(-1, x.value.shape[-1])
        _accumulate(w, g2.T @ x2)
        _accumulate(b, g2.sum(axis=0))

    return _node(x.value @ w.value.T + b.value, (x, w, b), backward)


# -- driver -------------------------------------------------------------------

def backward(root: Var) -> None:
    """Propagate d(root)/d(.) into ``.grad`` of every reachable leaf."""
    if root.value.size != 1:
        raise ValueError(f"gradient requires a scalar loss, got shape {root.value.shape}")
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


class NonFiniteError(ValueError):
    """The loss or one of its gradients is NaN or infinite."""


def value_and_grad(
    loss_fn: Callable[[Mapping[str, Var]], Var], params: ParameterStore
) -> tuple[float, ParameterStore]:
    leaves = {name: Var(arr, requires_grad=True) for name, arr in params.items()}
    loss = as_var(loss_fn(leaves))
    if loss.value.size != 1:
        raise ValueError(f"gradient requires a scalar loss, got shape {loss.value.shape}")
    if not np.isfinite(loss.value).all():
        raise NonFiniteError(f"loss is {float(loss.value)}")
    if loss.requires_grad:
        backward(loss)
    grads = []
    for name, leaf in leaves.items():
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        if not np.isfinite(g).all():
            raise NonFiniteError(f"gradient of {name!r} is not finite")
        grads.append((name, g))
    return float(loss.value), ParameterStore(grads)


def grad(loss_fn: Callable[[Mapping[str, Var]], Var], params: ParameterStore) -> ParameterStore:
    """Exact reverse-mode gradient of a scalar loss w.r.t. every parameter."""
    return value_and_grad(loss_fn, params)[1]
