"""Reverse-mode autodiff over small dense float64 tensors.

Each op returns a new :class:`Value` holding the forward result and a closure
that pushes ``out.grad`` into its parents.  ``Value.backward`` walks the graph
once in reverse topological order.  Broadcasting is limited to adding a
lower-rank tensor (a bias) onto the trailing axes of a higher-rank one.
"""
from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block; outputs are plain constants."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class Value:
    __slots__ = ("data", "_grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, _copy: bool = True):
        arr = np.array(data, dtype=np.float64) if _copy else data
        if arr.ndim > 3:
            raise ShapeError(f"rank {arr.ndim} tensors are not supported (max 3)")
        self.data = arr
        self._grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Value, ...] = ()
        self._backward = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Value{label}(shape={self.data.shape}, op={self.op})"

    @property
    def grad(self) -> np.ndarray:
        # materialized on first access; intermediate nodes only pay for it in backward
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    def zero_grad(self):
        self._grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data)

    def backward(self, seed=None):
        if not self.requires_grad:
            raise RuntimeError("backward() on a value that does not require grad")
        order: list[Value] = []
        visited: set[int] = set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = self.grad + (np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # operator sugar
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _make(data, parents, op, backward_factory):
    out = Value(np.asarray(data, dtype=np.float64), _copy=False)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_factory(out)
    return out


def _acc(v: Value, g) -> None:
    if v._grad is None:
        v._grad = np.array(g, dtype=np.float64)
    else:
        v._grad += g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    g = grad.sum(axis=tuple(range(lead))) if lead > 0 else grad
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Value, b: Value, op: str):
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    tail = long_[len(long_) - len(short):]
    if not all(s == t or s == 1 for s, t in zip(short, tail)):
        raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "add")

    def factory(out):
        def backward():
            if a.requires_grad:
                _acc(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(out.grad, b.shape))
        return backward

    return _make(a.data + b.data, (a, b), "add", factory)


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "sub")

    def factory(out):
        def backward():
            if a.requires_grad:
                _acc(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _acc(b, -_unbroadcast(out.grad, b.shape))
        return backward

    return _make(a.data - b.data, (a, b), "sub", factory)


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "mul")

    def factory(out):
        def backward():
            if a.requires_grad:
                _acc(a, _unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(out.grad * a.data, b.shape))
        return backward

    return _make(a.data * b.data, (a, b), "mul", factory)


def tanh(x) -> Value:
    x = as_value(x)
    y = np.tanh(x.data)

    def factory(out):
        def backward():
            _acc(x, out.grad * (1.0 - y * y))
        return backward

    return _make(y, (x,), "tanh", factory)


def sigmoid(x) -> Value:
    x = as_value(x)
    # tanh form never overflows
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def factory(out):
        def backward():
            _acc(x, out.grad * y * (1.0 - y))
        return backward

    return _make(y, (x,), "sigmoid", factory)


def relu(x) -> Value:
    x = as_value(x)
    mask = x.data > 0

    def factory(out):
        def backward():
            _acc(x, out.grad * mask)
        return backward

    return _make(x.data * mask, (x,), "relu", factory)


# ---------------------------------------------------------------------------
# linear algebra / structure


def matmul(a, b) -> Value:
    """``a @ b`` for a of rank 1-3 and b of rank 1-2 (b is never batched)."""
    a, b = as_value(a), as_value(b)
    if b.data.ndim not in (1, 2) or a.data.ndim not in (1, 2, 3) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def factory(out):
        def backward():
            g = out.grad
            if a.requires_grad:
                _acc(a, np.multiply.outer(g, b.data) if b.data.ndim == 1 else g @ b.data.T)
            if b.requires_grad:
                if b.data.ndim == 1:
                    _acc(b, np.tensordot(a.data, g, axes=(tuple(range(a.data.ndim - 1)), tuple(range(g.ndim)))))
                else:
                    a2 = a.data.reshape(-1, a.shape[-1])
                    _acc(b, a2.T @ g.reshape(-1, b.shape[1]))
        return backward

    return _make(a.data @ b.data, (a, b), "matmul", factory)


def concat(values, axis: int = -1) -> Value:
    vals = [as_value(v) for v in values]
    ranks = {v.data.ndim for v in vals}
    if len(ranks) != 1:
        raise ShapeError(f"concat: mixed ranks {[v.shape for v in vals]}")
    try:
        data = np.concatenate([v.data for v in vals], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[v.shape for v in vals]}") from exc
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [v.shape[ax] for v in vals])

    def factory(out):
        def backward():
            for v, lo, hi in zip(vals, bounds[:-1], bounds[1:]):
                if v.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[ax] = slice(lo, hi)
                    _acc(v, out.grad[tuple(idx)])
        return backward

    return _make(data, vals, "concat", factory)


def slice_last(x, start: int, stop: int) -> Value:
    """``x[..., start:stop]``."""
    x = as_value(x)
    if not 0 <= start < stop <= x.shape[-1]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for shape {x.shape}")

    def factory(out):
        def backward():
            x.grad[..., start:stop] += out.grad
        return backward

    return _make(x.data[..., start:stop], (x,), "slice", factory)


def index_rows(x, idx) -> Value:
    """``x[idx]`` along the first axis (idx is an int or int array)."""
    x = as_value(x)

    def factory(out):
        def backward():
            np.add.at(x.grad, idx, out.grad)
        return backward

    return _make(x.data[idx], (x,), "index", factory)


def sum_all(x) -> Value:
    x = as_value(x)

    def factory(out):
        def backward():
            _acc(x, np.broadcast_to(out.grad, x.shape))
        return backward

    return _make(x.data.sum(), (x,), "sum", factory)


def mean_all(x) -> Value:
    x = as_value(x)
    n = x.data.size

    def factory(out):
        def backward():
            _acc(x, np.broadcast_to(out.grad / n, x.shape))
        return backward

    return _make(x.data.mean(), (x,), "mean", factory)


def where(mask, a, b) -> Value:
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b`` (mask broadcasts)."""
    a, b = as_value(a), as_value(b)
    if a.shape != b.shape:
        raise ShapeError(f"where: incompatible shapes {a.shape} and {b.shape}")
    m = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)

    def factory(out):
        def backward():
            if a.requires_grad:
                _acc(a, np.where(m, out.grad, 0.0))
            if b.requires_grad:
                _acc(b, np.where(m, 0.0, out.grad))
        return backward

    return _make(np.where(m, a.data, b.data), (a, b), "where", factory)
