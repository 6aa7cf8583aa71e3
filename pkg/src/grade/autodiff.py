"""Minimal reverse-mode automatic differentiation over numpy arrays.

Implements exactly the operations the dynamics and the classifier need:
dense affine maps, elementwise nonlinearities, row gather/scatter for
edge message passing, per-neighborhood softmax, and clamped Euclidean
norms for interaction kernels. Tensors form a DAG; ``backward`` walks it
in reverse topological order and accumulates gradients into every node,
so callers can read ``.grad`` off leaf parameters (and off intermediate
states when chasing a non-finite gradient).
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "matmul",
    "power",
    "exp",
    "log",
    "tanh",
    "softplus",
    "relu",
    "reduce_sum",
    "mean",
    "reshape",
    "gather_rows",
    "segment_sum",
    "segment_softmax",
    "clamped_norm",
    "take_per_row",
]


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this (scalar or array) node into the DAG.

        Seeds with ones, so for a scalar loss the leaf ``.grad`` fields hold
        the exact gradient of the recorded computation.
        """
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # Arithmetic sugar so solver step formulas work on Tensors directly.
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g, a.data.shape)
        b.grad += _unbroadcast(g, b.data.shape)

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data - b.data, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g, a.data.shape)
        b.grad -= _unbroadcast(g, b.data.shape)

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g * b.data, a.data.shape)
        b.grad += _unbroadcast(g * a.data, b.data.shape)

    out._backward = backward
    return out


def matmul(a, b, transpose_b: bool = False) -> Tensor:
    a, b = constant(a), constant(b)
    out_data = a.data @ (b.data.T if transpose_b else b.data)
    out = Tensor(out_data, parents=(a, b))

    def backward(g):
        if transpose_b:
            a.grad += g @ b.data
            b.grad += g.T @ a.data
        else:
            a.grad += g @ b.data.T
            b.grad += a.data.T @ g

    out._backward = backward
    return out


def power(a, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a constant exponent."""
    a = constant(a)
    out = Tensor(a.data ** exponent, parents=(a,))

    def backward(g):
        a.grad += g * exponent * a.data ** (exponent - 1.0)

    out._backward = backward
    return out


def exp(a) -> Tensor:
    a = constant(a)
    out = Tensor(np.exp(a.data), parents=(a,))

    def backward(g):
        a.grad += g * out.data

    out._backward = backward
    return out


def log(a) -> Tensor:
    a = constant(a)
    out = Tensor(np.log(a.data), parents=(a,))

    def backward(g):
        a.grad += g / a.data

    out._backward = backward
    return out


def tanh(a) -> Tensor:
    a = constant(a)
    out = Tensor(np.tanh(a.data), parents=(a,))

    def backward(g):
        a.grad += g * (1.0 - out.data ** 2)

    out._backward = backward
    return out


def softplus(a) -> Tensor:
    a = constant(a)
    out = Tensor(np.logaddexp(0.0, a.data), parents=(a,))

    def backward(g):
        a.grad += g / (1.0 + np.exp(-a.data))

    out._backward = backward
    return out


def relu(a) -> Tensor:
    a = constant(a)
    out = Tensor(np.maximum(a.data, 0.0), parents=(a,))

    def backward(g):
        a.grad += g * (a.data > 0.0)

    out._backward = backward
    return out


def reduce_sum(a, axis: int | None = None) -> Tensor:
    """Sum to a scalar (axis=None) or along axis 1 with keepdims."""
    a = constant(a)
    if axis is None:
        out = Tensor(a.data.sum(), parents=(a,))

        def backward(g):
            a.grad += np.broadcast_to(g, a.data.shape)

    elif axis == 1:
        out = Tensor(a.data.sum(axis=1, keepdims=True), parents=(a,))

        def backward(g):
            a.grad += np.broadcast_to(g, a.data.shape)

    else:
        raise ValueError(f"unsupported axis {axis}")
    out._backward = backward
    return out


def mean(a) -> Tensor:
    a = constant(a)
    return mul(reduce_sum(a), 1.0 / a.data.size)


def reshape(a, shape: tuple) -> Tensor:
    a = constant(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def backward(g):
        a.grad += g.reshape(a.data.shape)

    out._backward = backward
    return out


def gather_rows(a, idx) -> Tensor:
    """Select rows ``a[idx]``; backward scatter-adds into the source rows."""
    a = constant(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(a.data[idx], parents=(a,))

    def backward(g):
        np.add.at(a.grad, idx, g)

    out._backward = backward
    return out


def segment_sum(a, idx, n: int) -> Tensor:
    """Scatter-add rows of ``a`` into ``n`` output rows keyed by ``idx``.

    ``idx`` must be sorted ascending so per-row accumulation order is the
    neighbor order, keeping results bit-reproducible.
    """
    a = constant(a)
    idx = np.asarray(idx, dtype=np.intp)
    out_data = np.zeros((n,) + a.data.shape[1:], dtype=np.float64)
    np.add.at(out_data, idx, a.data)
    out = Tensor(out_data, parents=(a,))

    def backward(g):
        a.grad += g[idx]

    out._backward = backward
    return out


def segment_softmax(scores, offsets) -> Tensor:
    """Softmax over contiguous segments of a flat score vector.

    ``offsets`` is the (n+1,) CSR pointer; every segment must be nonempty.
    Scores are max-shifted per segment before exponentiation.
    """
    scores = constant(scores)
    s = scores.data
    if s.ndim != 1:
        raise ValueError("segment_softmax expects a flat score vector")
    starts = offsets[:-1]
    counts = np.diff(offsets)
    if np.any(counts == 0):
        raise ValueError("segment_softmax requires nonempty segments")
    seg = np.repeat(np.arange(len(starts)), counts)
    shifted = s - np.maximum.reduceat(s, starts)[seg]
    e = np.exp(shifted)
    sums = np.add.reduceat(e, starts)
    p = e / sums[seg]
    out = Tensor(p, parents=(scores,))

    def backward(g):
        dot = np.add.reduceat(p * g, starts)
        scores.grad += p * (g - dot[seg])

    out._backward = backward
    return out


def clamped_norm(d, floor: float) -> Tensor:
    """Row-wise Euclidean norm of ``d`` clamped below at ``floor``.

    Gradient is zero wherever the clamp is active, matching the flat
    region of the clamped function.
    """
    d = constant(d)
    nrm = np.sqrt((d.data ** 2).sum(axis=1, keepdims=True))
    r = np.maximum(nrm, floor)
    out = Tensor(r, parents=(d,))

    def backward(g):
        active = nrm > floor
        safe = np.where(active, nrm, 1.0)
        d.grad += np.where(active, g / safe, 0.0) * d.data

    out._backward = backward
    return out


def take_per_row(a, cols) -> Tensor:
    """Pick one entry per row, ``a[i, cols[i]]``, returned as a column."""
    a = constant(a)
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, cols][:, None], parents=(a,))

    def backward(g):
        np.add.at(a.grad, (rows, cols), g[:, 0])

    out._backward = backward
    return out
