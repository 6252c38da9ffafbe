"""Reverse-mode automatic differentiation over dense float64 arrays.

Small eager tape: every operation returns a new :class:`Tensor` holding the
forward value and a closure that maps the output adjoint to per-parent
adjoints. ``backward`` on a scalar walks the tape in reverse topological
order; interior adjoints live in scratch storage while leaves (parameters
and tracked inputs) accumulate into ``grad``, so repeated backward calls
add up exactly.

Everything is float64. Tie-breaking in ``reduce_max`` goes to the lowest
index within the reduced group, which keeps graphs deterministic.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "grad_enabled",
    "make_op",
    "constant",
    "parameter",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_const",
    "concat",
    "reshape",
    "take",
    "reduce_max",
    "reduce_mean",
    "reduce_sum",
    "leaky_relu",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "sqrt",
    "square",
    "backward",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager disabling tape construction (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense float64 tensor with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        # maps output adjoint -> tuple of parent adjoints (None where untracked)
        self._backward: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all defer to the module-level primitives
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, other)

    def __radd__(self, other):
        return add_const(self, other)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -np.asarray(other, dtype=np.float64))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _slice(self, key)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def make_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], tuple],
) -> Tensor:
    """Create an op node.

    ``backward_fn(out_adjoint)`` must return one adjoint array (or None) per
    parent, in parent order. Adjoints for untracked parents are ignored.
    """
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` down to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), back)


def _broadcast_binary(name, a, b, fwd, back_a, back_b):
    try:
        out = fwd(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{name} shapes not broadcastable: {a.shape}, {b.shape}") from None

    def back(g):
        ga = _unbroadcast(back_a(g), a.shape) if a.requires_grad else None
        gb = _unbroadcast(back_b(g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_binary("add", a, b, np.add, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_binary("sub", a, b, np.subtract, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_binary("mul", a, b, np.multiply, lambda g: g * b.data, lambda g: g * a.data)


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return make_op(a.data * s, (a,), lambda g: (g * s,))


def add_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    return make_op(a.data + c, (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op(out, tensors, back)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def _slice(a: Tensor, key) -> Tensor:
    out = a.data[key]
    out = np.ascontiguousarray(out)

    def back(g):
        buf = np.zeros_like(a.data)
        buf[key] = g
        return (buf,)

    return make_op(out, (a,), back)


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, indices, axis=axis)

    def back(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, (slice(None),) * axis + (indices,), g)
        return (buf,)

    return make_op(out, (a,), back)


def reduce_max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    # gradient routes to the first argmax along the axis (lowest index on ties)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def back(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, np.expand_dims(idx, axis), gk, axis=axis)
        return (buf,)

    return make_op(out, (a,), back)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk, a.shape).copy(),)

    return make_op(out, (a,), back)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    elif isinstance(axis, int):
        count = a.shape[axis]
    else:
        count = int(np.prod([a.shape[i] for i in axis]))

    def back(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk / count, a.shape).copy(),)

    return make_op(out, (a,), back)


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    nonneg = a.data >= 0.0
    out = np.where(nonneg, a.data, alpha * a.data)
    return make_op(out, (a,), lambda g: (np.where(nonneg, g, alpha * g),))


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, alpha=0.0)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return make_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_op(out, (a,), lambda g: (g * (1.0 - out * out),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return make_op(out, (a,), back)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (g * 0.5 / out,))


def square(a: Tensor) -> Tensor:
    return mul(a, a)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dx into every tracked leaf reachable from ``loss``.

    ``loss`` must be scalar. Leaf gradients add onto existing ``grad``
    buffers; call ``zero_grad`` between independent passes.
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    # iterative topological order (graphs can be deeper than the recursion limit)
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # tracked leaf: persistent accumulation
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g
            continue
        parent_adjoints = node._backward(g)
        for p, pg in zip(node._parents, parent_adjoints):
            if pg is None or not p.requires_grad:
                continue
            # fresh arrays from the closures are safe to own; only copies of
            # the incoming adjoint (or views) could alias another node
            if pg is g or pg.base is not None or pg.dtype != np.float64:
                pg = np.array(pg, dtype=np.float64, copy=True)
            if p._backward is None and not p._parents:
                if p.grad is None:
                    p.grad = pg
                else:
                    p.grad += pg
            else:
                existing = adjoint.get(id(p))
                if existing is None:
                    adjoint[id(p)] = pg
                else:
                    existing += pg
