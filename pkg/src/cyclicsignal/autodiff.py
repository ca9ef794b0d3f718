"""Reverse-mode automatic differentiation on numpy arrays.

A small tape: each op returns a Tensor holding its parents and a
vector-Jacobian closure; backward() walks the graph once in reverse
topological order and accumulates gradients into .grad. Everything is
float64 so gradients can be validated against central finite differences.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Seed d(self)/d(self) = 1 and push gradients back through the tape."""
        if self._vjp is None and not self._parents:
            raise RuntimeError("backward() on a tensor with no recorded operations")
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        self.grad = np.ones_like(self.data)
        for node in _reverse_topo(self):
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, neg(_t(other)))

    def __rsub__(self, other):
        return add(_t(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast up from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _reverse_topo(root: Tensor) -> list[Tensor]:
    """Consumers-before-producers ordering of root's ancestry."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            stack.append((p, False))
    order.reverse()
    return order


# -- arithmetic -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.data + b.data

    def vjp(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor(out, _parents=(a, b), _vjp=vjp)


def neg(a) -> Tensor:
    a = _t(a)

    def vjp(g):
        _accum(a, -g)

    return Tensor(-a.data, _parents=(a,), _vjp=vjp)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.data * b.data

    def vjp(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out, _parents=(a, b), _vjp=vjp)


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return Tensor(out, _parents=(a, b), _vjp=vjp)


# -- elementwise nonlinearities -------------------------------------------


def sigmoid(a) -> Tensor:
    a = _t(a)
    # exp overflow for very negative inputs still yields the right limit 0
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        _accum(a, g * out * (1.0 - out))

    return Tensor(out, _parents=(a,), _vjp=vjp)


def tanh(a) -> Tensor:
    a = _t(a)
    out = np.tanh(a.data)

    def vjp(g):
        _accum(a, g * (1.0 - out * out))

    return Tensor(out, _parents=(a,), _vjp=vjp)


def exp(a) -> Tensor:
    a = _t(a)
    out = np.exp(a.data)

    def vjp(g):
        _accum(a, g * out)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def log_softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable log softmax along one axis."""
    a = _t(a)
    m = a.data.max(axis=axis, keepdims=True)
    z = a.data - m
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def vjp(g):
        p = np.exp(out)
        _accum(a, g - p * g.sum(axis=axis, keepdims=True))

    return Tensor(out, _parents=(a,), _vjp=vjp)


# -- min/max/clip ---------------------------------------------------------


def maximum(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    pick_a = a.data >= b.data  # ties route the gradient to the first argument
    out = np.where(pick_a, a.data, b.data)

    def vjp(g):
        _accum(a, _unbroadcast(g * pick_a, a.data.shape))
        _accum(b, _unbroadcast(g * ~pick_a, b.data.shape))

    return Tensor(out, _parents=(a, b), _vjp=vjp)


def minimum(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)

    def vjp(g):
        _accum(a, _unbroadcast(g * pick_a, a.data.shape))
        _accum(b, _unbroadcast(g * ~pick_a, b.data.shape))

    return Tensor(out, _parents=(a, b), _vjp=vjp)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes through the closed interval."""
    a = _t(a)
    inside = (a.data >= lo) & (a.data <= hi)
    out = np.clip(a.data, lo, hi)

    def vjp(g):
        _accum(a, g * inside)

    return Tensor(out, _parents=(a,), _vjp=vjp)


# -- shape manipulation ---------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _t(a)
    out = a.data.reshape(shape)

    def vjp(g):
        _accum(a, g.reshape(a.data.shape))

    return Tensor(out, _parents=(a,), _vjp=vjp)


def broadcast_to(a, shape) -> Tensor:
    a = _t(a)
    out = np.broadcast_to(a.data, shape).copy()

    def vjp(g):
        _accum(a, _unbroadcast(g, a.data.shape))

    return Tensor(out, _parents=(a,), _vjp=vjp)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_t(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def vjp(g):
        splits = np.cumsum(sizes)[:-1]
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    return Tensor(out, _parents=tuple(parts), _vjp=vjp)


def getitem(a, key) -> Tensor:
    """Basic indexing only (ints, slices, Ellipsis); no repeated elements."""
    a = _t(a)
    out = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        _accum(a, ga)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def take(a, indices, axis: int) -> Tensor:
    """Gather along one axis with an integer index array (may repeat)."""
    a = _t(a)
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(a.data, idx, axis=axis)

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(np.moveaxis(ga, axis, 0), idx, np.moveaxis(g, axis, 0))
        _accum(a, ga)

    return Tensor(out, _parents=(a,), _vjp=vjp)


# -- reductions -----------------------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            for ax in sorted(ax % a.data.ndim for ax in axes):
                g = np.expand_dims(g, ax)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return Tensor(out, _parents=(a,), _vjp=vjp)


def mean_(a, axis=None) -> Tensor:
    a = _t(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(sum_(a, axis=axis), 1.0 / n)
