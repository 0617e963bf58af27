"""Define-by-run reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` records every primitive as it executes: the ids of its
parents and a closure mapping the output cotangent to parent cotangents.
Nodes are appended in execution order, so the node list is already
topologically sorted and :func:`backward` is a single reverse sweep.

Broadcasting follows numpy; cotangents are summed back to each parent's shape.

    >>> tape = Tape()
    >>> x = tape.param(3.0)
    >>> grads = backward(square(x))
    >>> float(grads[x.node])
    6.0
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError, InvalidArgumentError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)


class Tape:
    __slots__ = ("parents", "vjps", "debug")

    def __init__(self, debug: bool = False):
        self.parents: list[tuple] = []
        self.vjps: list[Callable | None] = []
        self.debug = debug

    def __len__(self) -> int:
        return len(self.parents)

    def param(self, value) -> "Tensor":
        """A differentiable leaf."""
        value = np.array(value, dtype=float)
        if self.debug and not np.all(np.isfinite(value)):
            raise NumericalError("non-finite parameter value")
        self.parents.append(())
        self.vjps.append(None)
        return Tensor(value, self, len(self.parents) - 1)

    def const(self, value) -> "Tensor":
        return Tensor(np.asarray(value, dtype=float), self, None)

    def record(self, value: np.ndarray, parents: Sequence["Tensor"], vjp: Callable, name: str):
        if self.debug and not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite output from primitive '{name}'")
        ids = tuple(p.node for p in parents)
        if all(i is None for i in ids):
            return Tensor(value, self, None)
        self.parents.append(ids)
        self.vjps.append(vjp)
        return Tensor(value, self, len(self.parents) - 1)


class Tensor:
    """A value on a tape; ``node`` is ``None`` for constants."""

    __slots__ = ("value", "tape", "node")
    __array_priority__ = 100.0

    def __init__(self, value: np.ndarray, tape: Tape, node: int | None):
        self.value = value
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(node={self.node}, value={self.value!r})"

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return slice_(self, idx)


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, Tensor):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise InvalidArgumentError("tensors belong to different tapes")
    if tape is None:
        raise InvalidArgumentError("at least one argument must be a Tensor")
    return tape


def _lift(x, tape: Tape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=float), tape, None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary_shapes(a: Tensor, b: Tensor, name: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise InvalidArgumentError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- binary ops


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    _binary_shapes(a, b, "add")
    sa, sb = a.shape, b.shape
    return tape.record(
        a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    _binary_shapes(a, b, "sub")
    sa, sb = a.shape, b.shape
    return tape.record(
        a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    _binary_shapes(a, b, "mul")
    av, bv = a.value, b.value

    def vjp(g):
        return (
            _unbroadcast(g * bv, av.shape) if a.node is not None else None,
            _unbroadcast(g * av, bv.shape) if b.node is not None else None,
        )

    return tape.record(av * bv, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    _binary_shapes(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv

    def vjp(g):
        return (
            _unbroadcast(g / bv, av.shape) if a.node is not None else None,
            _unbroadcast(-g * out / bv, bv.shape) if b.node is not None else None,
        )

    return tape.record(out, (a, b), vjp, "div")


def matmul(a, b) -> Tensor:
    """2-D matrix product; vectors are not promoted."""
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        return (
            g @ bv.T if a.node is not None else None,
            av.T @ g if b.node is not None else None,
        )

    return tape.record(av @ bv, (a, b), vjp, "matmul")


# ----------------------------------------------------------------- unary ops


def neg(x: Tensor) -> Tensor:
    return x.tape.record(-x.value, (x,), lambda g: (-g,), "neg")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.value)
    return x.tape.record(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xv = x.value
    if np.any(xv <= 0):
        raise DomainError("log of a non-positive value")
    return x.tape.record(np.log(xv), (x,), lambda g: (g / xv,), "log")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.value)
    return x.tape.record(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.value)
    return x.tape.record(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), evaluated as max(x, 0) + log1p(e^-|x|) so large x cannot overflow."""
    xv = x.value
    out = np.maximum(xv, 0.0) + np.log1p(np.exp(-np.abs(xv)))
    return x.tape.record(out, (x,), lambda g: (g * expit(xv),), "softplus")


def square(x: Tensor) -> Tensor:
    xv = x.value
    return x.tape.record(xv * xv, (x,), lambda g: (2.0 * g * xv,), "square")


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.value < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(x.value)
    return x.tape.record(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


# ------------------------------------------------------------ shape handling


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return x.tape.record(np.asarray(out), (x,), vjp, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    tape = _tape_of(*xs)
    xs = [_lift(x, tape) for x in xs]
    try:
        out = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError as exc:
        raise InvalidArgumentError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def vjp(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) if x.node is not None else None
            for i, x in enumerate(xs)
        )

    return tape.record(out, xs, vjp, "concat")


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    tape = _tape_of(*xs)
    xs = [_lift(x, tape) for x in xs]
    try:
        out = np.stack([x.value for x in xs], axis=axis)
    except ValueError as exc:
        raise InvalidArgumentError(f"stack: {exc}") from None

    def vjp(g):
        return tuple(
            np.take(g, i, axis=axis) if x.node is not None else None for i, x in enumerate(xs)
        )

    return tape.record(out, xs, vjp, "stack")


def slice_(x: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing only, so the selected entries never repeat."""
    shape = x.shape
    if any(isinstance(i, (list, np.ndarray)) for i in (idx if isinstance(idx, tuple) else (idx,))):
        raise InvalidArgumentError("slice: fancy indexing is not supported")

    def vjp(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    try:
        out = x.value[idx]
    except IndexError as exc:
        raise InvalidArgumentError(f"slice: {exc}") from None
    return x.tape.record(np.array(out), (x,), vjp, "slice")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return x.tape.record(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


# ------------------------------------------------------------------ composites


def gaussian_log_pdf(x, mean_, var, axis=None) -> Tensor:
    """Sum over ``axis`` (default: all) of -0.5 log(2 pi var) - (x - mean)^2 / (2 var)."""
    tape = _tape_of(x, mean_, var)
    x, mean_, var = _lift(x, tape), _lift(mean_, tape), _lift(var, tape)
    vv = var.value
    if np.any(~(vv > 0)):
        raise DomainError("gaussian_log_pdf: variance must be > 0")
    shape = np.broadcast_shapes(x.shape, mean_.shape, var.shape)
    resid = x.value - mean_.value
    z2 = resid * resid / vv
    terms = -0.5 * (LOG_2PI + np.log(vv) + z2)
    out = np.asarray(np.sum(np.broadcast_to(terms, shape), axis=axis))

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        g = np.broadcast_to(g, shape)
        d_x = -g * resid / vv
        d_var = g * 0.5 * (z2 - 1.0) / vv
        return (
            _unbroadcast(d_x, x.shape) if x.node is not None else None,
            _unbroadcast(-d_x, mean_.shape) if mean_.node is not None else None,
            _unbroadcast(d_var, var.shape) if var.node is not None else None,
        )

    return tape.record(out, (x, mean_, var), vjp, "gaussian_log_pdf")


# -------------------------------------------------------------------- backward


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar ``loss``; returns cotangents keyed by node id.

    Every reachable node appears in the map, including parameter leaves.
    """
    if not isinstance(loss, Tensor):
        raise InvalidArgumentError("loss must be a Tensor")
    if loss.value.size != 1:
        raise InvalidArgumentError(f"loss must be scalar, got shape {loss.shape}")
    if loss.node is None:
        return {}
    tape = loss.tape
    parents, vjps = tape.parents, tape.vjps
    grads: list = [None] * (loss.node + 1)
    grads[loss.node] = np.ones(loss.shape)
    for i in range(loss.node, -1, -1):
        g = grads[i]
        if g is None or vjps[i] is None:
            continue
        for pid, pg in zip(parents[i], vjps[i](g)):
            if pid is None or pg is None:
                continue
            grads[pid] = pg if grads[pid] is None else grads[pid] + pg
    return {i: g for i, g in enumerate(grads) if g is not None}


def grad(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` for each tensor in ``wrt`` (zeros where unreachable)."""
    g = backward(loss)
    return [np.asarray(g.get(t.node, np.zeros(t.shape))).reshape(t.shape) for t in wrt]
