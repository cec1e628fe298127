"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and records the operation that produced it; calling
``backward()`` on a scalar loss walks the graph in reverse topological order
and accumulates gradients into every tensor created with
``requires_grad=True``. Only the operations needed by the forecaster are
implemented. Broadcasting follows numpy semantics, with gradients summed back
down to each operand's shape.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction (inference-only forward passes)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad if grad.dtype == self.data.dtype else grad.astype(self.data.dtype)
        else:
            self.grad = self.grad + grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor (defaults to d(self)/d(self) = 1)."""
        if grad is None:
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(_wrap(other, dtype=self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, dtype=self.dtype), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _wrap(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive operations


def add(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, dtype=a.dtype)
    data = a.data + b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, dtype=a.dtype)
    data = a.data * b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, dtype=a.dtype)
    data = a.data / b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-grad * a.data / (b.data**2), b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b)
    data = a.data @ b.data

    def backward(grad):
        if a.requires_grad:
            ga = grad @ np.swapaxes(b.data, -1, -2)
            a.accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ grad
            b.accumulate(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward)


def relu(x) -> Tensor:
    x = _wrap(x)
    data = np.maximum(x.data, 0.0)

    def backward(grad):
        x.accumulate(grad * (x.data > 0.0))

    return _make(data, (x,), backward)


def exp(x) -> Tensor:
    x = _wrap(x)
    data = np.exp(x.data)

    def backward(grad):
        x.accumulate(grad * data)

    return _make(data, (x,), backward)


def sqrt(x) -> Tensor:
    x = _wrap(x)
    data = np.sqrt(x.data)

    def backward(grad):
        x.accumulate(grad * 0.5 / data)

    return _make(data, (x,), backward)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate(np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False))

    return _make(data, (x,), backward)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    data = x.data.reshape(shape)

    def backward(grad):
        x.accumulate(grad.reshape(x.data.shape))

    return _make(data, (x,), backward)


def swapaxes(x, a: int, b: int) -> Tensor:
    x = _wrap(x)
    data = np.swapaxes(x.data, a, b)

    def backward(grad):
        x.accumulate(np.swapaxes(grad, a, b))

    return _make(data, (x,), backward)


def transpose(x, axes: tuple[int, ...]) -> Tensor:
    x = _wrap(x)
    data = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        x.accumulate(np.transpose(grad, inverse))

    return _make(data, (x,), backward)


def getitem(x, idx) -> Tensor:
    """Basic (non-repeating) indexing; use ``take`` for gather with repeats."""
    x = _wrap(x)
    data = x.data[idx]

    def backward(grad):
        full = np.zeros_like(x.data)
        full[idx] += grad
        x.accumulate(full)

    return _make(data, (x,), backward)


def take(table, indices) -> Tensor:
    """Row gather ``table[indices]`` along axis 0, repeats allowed."""
    table = _wrap(table)
    indices = np.asarray(indices)
    data = table.data[indices]

    def backward(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, indices, grad)
        table.accumulate(full)

    return _make(data, (table,), backward)


def concatenate(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * grad.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate(grad[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def where(condition: np.ndarray, a, b) -> Tensor:
    """Select by a constant boolean condition (no gradient through it)."""
    condition = np.asarray(condition, dtype=bool)
    a = _wrap(a)
    b = _wrap(b, dtype=a.dtype)
    data = np.where(condition, a.data, b.data)

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad * condition, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad * ~condition, b.data.shape))

    return _make(data, (a, b), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        inner = (grad * data).sum(axis=axis, keepdims=True)
        x.accumulate(data * (grad - inner))

    return _make(data, (x,), backward)
