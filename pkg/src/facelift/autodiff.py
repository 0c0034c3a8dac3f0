"""Reverse-mode automatic differentiation over recorded array operations.

Every operation produces a new node in an implicit acyclic graph; calling
``backward`` on a scalar node walks the graph in reverse topological order
and accumulates gradients into the leaves that asked for them. All data is
double precision and every op output is checked for NaN/Inf.
"""

from __future__ import annotations

import itertools
import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(ArithmeticError):
    """An operation or gradient produced NaN or Inf."""


_node_ids = itertools.count()


def _require_finite(arr: np.ndarray, op: str, node_id: int, what: str = "output") -> None:
    # A plain sum is one cheap pass and goes NaN/Inf whenever any entry is.
    if math.isfinite(float(arr.sum())):
        return
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite {what} in op {op!r} (node {node_id})")


class Tensor:
    """A double-precision array with an optional gradient tape entry."""

    __slots__ = ("data", "grad", "op", "parents", "node_id", "requires_grad",
                 "needs_grad", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple["Tensor", ...] = (),
                 backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents = parents
        self.node_id = next(_node_ids)
        self.requires_grad = requires_grad
        self.needs_grad = requires_grad or any(p.needs_grad for p in parents)
        self._backward = backward
        _require_finite(self.data, op, self.node_id)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, node={self.node_id})"

    # Operator sugar; floats are wrapped as constants.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def backward(self) -> None:
        """Accumulate gradients of this scalar into all reachable leaves."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative postorder; graphs can be deep
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in seen or not node.needs_grad:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            contributions = node._backward(node.grad)
            for parent, g in zip(node.parents, contributions):
                if g is None or not parent.needs_grad:
                    continue
                _require_finite(g, node.op, node.node_id, what="gradient")
                # Accumulation always allocates, so aliasing g is harmless.
                parent.grad = g if parent.grad is None else parent.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --------------------------------------------------------------------------
# Primitive operations.

def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return (_unbroadcast(g, a.data.shape) if a.needs_grad else None,
                _unbroadcast(g, b.data.shape) if b.needs_grad else None)

    return Tensor(a.data + b.data, op="add", parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape) if a.needs_grad else None,
                _unbroadcast(g * a.data, b.data.shape) if b.needs_grad else None)

    return Tensor(a.data * b.data, op="mul", parents=(a, b), backward=backward)


def scale(a: Tensor, k: float) -> Tensor:
    def backward(g):
        return (g * k,)

    return Tensor(a.data * k, op="scale", parents=(a,), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return (g @ b.data.T if a.needs_grad else None,
                a.data.T @ g if b.needs_grad else None)

    return Tensor(a.data @ b.data, op="matmul", parents=(a, b), backward=backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def backward(g):
        return (g * mask,)

    return Tensor(np.where(mask, a.data, 0.0), op="relu", parents=(a,), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, op="sigmoid", parents=(a,), backward=backward)


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return Tensor(out, op="softmax", parents=(a,), backward=backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        return (np.full_like(a.data, float(g) / n),)

    return Tensor(a.data.mean(), op="mean", parents=(a,), backward=backward)


def sum_squares(a: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * float(g) * a.data,)

    return Tensor((a.data * a.data).sum(), op="sum_squares", parents=(a,), backward=backward)


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm with subgradient 0 at the origin."""
    norm = float(np.sqrt((a.data * a.data).sum()))

    def backward(g):
        if norm == 0.0:
            return (np.zeros_like(a.data),)
        return (float(g) * a.data / norm,)

    return Tensor(norm, op="l2_norm", parents=(a,), backward=backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor(a.data.reshape(shape), op="reshape", parents=(a,), backward=backward)


def pick(a: Tensor, index: int) -> Tensor:
    """Select one element (by flat index) as a scalar."""
    flat = a.data.reshape(-1)
    if not (0 <= index < flat.size):
        raise IndexError(f"pick index {index} out of range for size {flat.size}")

    def backward(g):
        out = np.zeros_like(a.data).reshape(-1)
        out[index] = float(g)
        return (out.reshape(a.data.shape),)

    return Tensor(flat[index], op="pick", parents=(a,), backward=backward)


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean cross-entropy between row-wise softmax(logits) and target rows.

    ``targets`` is a constant probability (or one-hot) array of the same
    shape; the fused form stays stable for large logits.
    """
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.data.shape:
        raise ValueError(f"targets shape {t.shape} != logits shape {logits.data.shape}")
    x = logits.data
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    n_rows = x.size // x.shape[-1]
    ce = (lse.reshape(-1) - (t * x).sum(axis=-1).reshape(-1)).sum() / n_rows
    probs = np.exp(x - lse)

    def backward(g):
        return (float(g) * (probs - t) / n_rows,)

    return Tensor(ce, op="softmax_cross_entropy", parents=(logits,), backward=backward)


def embed_labels(one_hot: np.ndarray) -> Tensor:
    """Wrap a per-cell one-hot label array as a constant graph leaf."""
    return Tensor(one_hot, op="embed_labels")


def grad(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Run backward and return each parameter's gradient (zeros if unused)."""
    for p in params:
        p.grad = None
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


@contextmanager
def frozen(params: Iterable[Tensor]):
    """Temporarily stop gradients from flowing into the given leaves.

    Useful when optimizing an input against fixed model weights.
    """
    params = list(params)
    saved = [(p.requires_grad, p.needs_grad) for p in params]
    for p in params:
        p.requires_grad = False
        p.needs_grad = False
    try:
        yield
    finally:
        for p, (r, n) in zip(params, saved):
            p.requires_grad = r
            p.needs_grad = n
