"""Neural building blocks on top of the autodiff engine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import ShapeError, Value, _acc, _make, add, as_value, matmul, mul, sigmoid, slice_last, tanh


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    a = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-a, a, size=shape)


@dataclass
class Linear:
    """Affine map ``x @ weight + bias``; weight is (in, out)."""

    weight: Value
    bias: Value

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int, n_out: int, name: str = "linear") -> "Linear":
        w = Value(uniform_init(rng, (n_in, n_out), n_in), requires_grad=True, name=f"{name}.weight")
        b = Value(uniform_init(rng, (n_out,), n_in), requires_grad=True, name=f"{name}.bias")
        return cls(w, b)

    def __call__(self, x) -> Value:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> list[Value]:
        return [self.weight, self.bias]


@dataclass
class LstmParams:
    """Gate blocks are packed along the last axis in order (input, forget, cell, output)."""

    input_size: int
    hidden_size: int
    w_x: Value  # (input_size, 4H)
    w_h: Value  # (H, 4H)
    b: Value  # (4H,)

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden_size: int, name: str = "lstm") -> "LstmParams":
        h4 = 4 * hidden_size
        w_x = uniform_init(rng, (input_size, h4), input_size)
        w_h = uniform_init(rng, (hidden_size, h4), hidden_size)
        b = np.zeros(h4)
        b[hidden_size : 2 * hidden_size] = 1.0
        return cls(
            input_size,
            hidden_size,
            Value(w_x, requires_grad=True, name=f"{name}.w_x"),
            Value(w_h, requires_grad=True, name=f"{name}.w_h"),
            Value(b, requires_grad=True, name=f"{name}.b"),
        )

    def parameters(self) -> list[Value]:
        return [self.w_x, self.w_h, self.b]


def lstm_cell(x, h, c, p: LstmParams) -> tuple[Value, Value]:
    x, h, c = as_value(x), as_value(h), as_value(c)
    if x.shape[-1] != p.input_size or h.shape[-1] != p.hidden_size or c.shape != h.shape:
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h.shape}, c {c.shape} do not fit "
            f"input_size={p.input_size}, hidden_size={p.hidden_size}"
        )
    hs = p.hidden_size
    z = add(add(matmul(x, p.w_x), matmul(h, p.w_h)), p.b)
    i = sigmoid(slice_last(z, 0, hs))
    f = sigmoid(slice_last(z, hs, 2 * hs))
    g = tanh(slice_last(z, 2 * hs, 3 * hs))
    o = sigmoid(slice_last(z, 3 * hs, 4 * hs))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def max_pool_1d(x) -> Value:
    """Window 2, stride 2 over the last axis; a trailing odd element passes through.

    Gradient goes to the arg-max only, the first index on ties.
    """
    x = as_value(x)
    m = x.shape[-1]
    if m < 1:
        raise ShapeError("max_pool_1d needs at least one element")
    pairs = m // 2
    lead = x.shape[:-1]
    even = x.data[..., 0 : 2 * pairs : 2]
    odd = x.data[..., 1 : 2 * pairs : 2]
    take_odd = odd > even
    src = np.arange(0, 2 * pairs, 2) + take_odd
    if m % 2:
        src = np.concatenate([src, np.broadcast_to(np.array([m - 1]), lead + (1,))], axis=-1)
    src = np.broadcast_to(src, lead + (src.shape[-1],))
    data = np.take_along_axis(x.data, src, axis=-1)

    def factory(out):
        def backward():
            g = np.zeros_like(x.data)
            np.put_along_axis(g, src, out.grad, axis=-1)
            _acc(x, g)
        return backward

    return _make(data, (x,), "max_pool_1d", factory)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_np(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax_np(logits))


def softmax_cross_entropy(logits, labels) -> Value:
    """Mean ``-log softmax(logits)[label]`` over the batch (scalar for 1-D logits)."""
    logits = as_value(logits)
    lab = np.asarray(labels, dtype=np.int64)
    n_classes = logits.shape[-1]
    batched = logits.data.ndim == 2
    if logits.data.ndim not in (1, 2) or lab.ndim != (1 if batched else 0):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} with labels of shape {lab.shape}")
    if np.any(lab < 0) or np.any(lab >= n_classes):
        raise ValueError(f"label out of range for {n_classes} classes: {lab}")
    logp = log_softmax_np(logits.data)
    if batched:
        rows = np.arange(lab.shape[0])
        loss = -logp[rows, lab].mean()
    else:
        loss = -logp[lab]

    def factory(out):
        def backward():
            g = np.exp(logp)
            if batched:
                g[rows, lab] -= 1.0
                g /= lab.shape[0]
            else:
                g[lab] -= 1.0
            _acc(logits, out.grad * g)
        return backward

    return _make(loss, (logits,), "cross_entropy", factory)
