"""Minimal float64 tensor with reverse-mode automatic differentiation.

Every differentiable op creates a result ``Tensor`` that remembers its operands
and a closure mapping the output gradient to operand gradients.  ``backward``
orders the recorded graph topologically (depth-first, operands visited left to
right), walks it once in reverse and then releases it, so a graph can only be
differentiated once.

Reductions delegate to numpy over C-contiguous float64 arrays; for a given
shape the accumulation order is fixed, which makes forward and backward passes
bit-reproducible from run to run.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, UsageError

GradFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _as_array(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: GradFn | None = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("division by a tensor is not supported; divide by a float")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn: GradFn, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op}'")
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data, dtype=np.float64)
    out.grad = None
    out._op = op
    out._consumed = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def grad_fn(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), grad_fn, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def grad_fn(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), grad_fn, "matmul")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value; clamp the input first")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise ``max(a, floor)``; clamped entries pass no gradient."""
    mask = a.data >= floor
    return _make(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,), "clamp_min")


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    out = a.data.sum(axis=axis)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(np.asarray(out), (a,), grad_fn, "sum")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def softmax_rows(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``z / temperature`` with max subtraction (numpy only)."""
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax of ``logits / temperature``."""
    s = softmax_rows(logits.data, temperature)

    def grad_fn(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - inner) / temperature,)

    return _make(s, (logits,), grad_fn, "softmax")


def log_softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    z = logits.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def grad_fn(g):
        return ((g - s * g.sum(axis=-1, keepdims=True)) / temperature,)

    return _make(out, (logits,), grad_fn, "log_softmax")


def soft_target_cross_entropy(target: np.ndarray, logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Batch mean of ``-sum_k target_k * log softmax(logits / temperature)_k``.

    ``target`` rows must sum to 1; the gradient is ``(softmax - target) / (t * B)``,
    which is exactly zero when ``target`` is the softmax of identical logits.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != logits.shape or logits.data.ndim != 2:
        raise DimensionError(f"target {target.shape} and logits {logits.shape} must be matching [B x C]")
    z = logits.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    log_s = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    b = logits.shape[0]
    value = -float((target * log_s).sum()) / b

    def grad_fn(g):
        s = softmax_rows(logits.data, temperature)
        return ((s - target) * (float(np.reshape(g, ())) / (temperature * b)),)

    return _make(np.asarray(value), (logits,), grad_fn, "soft_target_ce")


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            if id(node) in seen:
                continue
            seen.add(id(node))
        if i < len(node._parents):
            stack.append((node, i + 1))
            parent = node._parents[i]
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, 0))
        else:
            order.append(node)
    return order


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> list[np.ndarray]:
    """Differentiate a scalar ``loss`` and release its graph.

    Leaf tensors with ``requires_grad`` get their ``grad`` slot set (overwritten,
    not accumulated).  Returns one gradient per entry of ``params``; parameters
    the loss does not depend on get exact zeros.
    """
    params = list(params)
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise UsageError("backward called twice on the same graph")
    grads: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        order = _topological_order(loss)
        grads[id(loss)] = np.ones(loss.shape)
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._grad_fn is None:
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else np.array(pg, dtype=np.float64)
        for node in order:
            if node._grad_fn is None:
                node.grad = grads.get(id(node), np.zeros(node.shape))
            else:
                node._parents = ()
                node._grad_fn = None
    loss._consumed = True
    out = []
    for p in params:
        g = grads.get(id(p))
        g = np.zeros(p.shape) if g is None else g.reshape(p.shape)
        p.grad = g
        out.append(g)
    return out
