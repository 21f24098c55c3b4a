"""Dense float64 tensors with tape-based reverse-mode differentiation.

The op set is closed: everything the forecaster needs (matrix products,
pointwise activations, structural reshuffles, gathers and the entmax
normaliser) is defined here together with its exact backward rule.
Operations are recorded only while a :class:`Tape` is active and at least one
input requires a gradient.
"""

from __future__ import annotations

import logging
from contextvars import ContextVar
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core import entmax as entmax_fn
from app.core.memory import meter

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


class Tensor:
    """A dense array of 64-bit reals."""

    __slots__ = ("data", "requires_grad", "__weakref__")
    # Make numpy defer to the reflected operators below.
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        meter.register(self, self.data)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        if np.isscalar(other):
            return shift(self, float(other))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        if np.isscalar(other):
            return shift(self, -float(other))
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        if np.isscalar(other):
            return shift(scale(self, -1.0), float(other))
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A learnable tensor with an accumulated gradient and a stable id."""

    __slots__ = ("grad", "id")

    def __init__(self, data: ArrayLike, id: str):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.id = id

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter(id={self.id!r}, shape={self.shape})"


class _Record:
    __slots__ = ("output", "inputs", "backward")

    def __init__(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; every recorded operation's inputs were produced
    before it, so a reverse sweep is a valid topological order.
    """

    def __init__(self) -> None:
        self._records: List[_Record] = []
        self._tokens: List[object] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_active_tape.set(self))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self._records)

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn) -> None:
        self._records.append(_Record(output, inputs, backward_fn))

    def clear(self) -> None:
        self._records.clear()

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(value) into every reachable Parameter.

        Raises:
            ValueError: If ``loss`` is not a scalar or was not recorded here
        """
        if loss.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")

        start = None
        for position in range(len(self._records) - 1, -1, -1):
            if self._records[position].output is loss:
                start = position
                break
        if start is None:
            raise ValueError("loss was not produced by an operation on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for record in reversed(self._records[: start + 1]):
            upstream = grads.pop(id(record.output), None)
            if upstream is None:
                continue
            input_grads = record.backward(upstream)
            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if isinstance(tensor, Parameter):
                    tensor.grad += grad
                    continue
                key = id(tensor)
                existing = grads.get(key)
                grads[key] = grad if existing is None else existing + grad

        logger.debug("Backward pass over %d recorded operations", start + 1)
        self.clear()


def current_tape() -> Optional[Tape]:
    return _active_tape.get()


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Run the reverse sweep on ``tape`` (default: the active tape)."""
    tape = tape or current_tape()
    if tape is None:
        raise ValueError("loss was not produced on a tape: no tape is active")
    tape.backward(loss)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    tape = current_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _require_same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Matrix product


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes.

    Raises:
        ValueError: If the inner extents or the stacked axes disagree
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ValueError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}") from exc

    def backward_fn(g: np.ndarray):
        grad_a = _matmul_grad_left(g, a.data, b.data) if a.requires_grad else None
        grad_b = _matmul_grad_right(g, a.data, b.data) if b.requires_grad else None
        return grad_a, grad_b

    return _result(data, (a, b), backward_fn)


def _matmul_grad_left(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim == 2 and b.ndim > 2:
        stacked_b = b.reshape(-1, *b.shape[-2:])
        stacked_g = g.reshape(-1, *g.shape[-2:])
        return np.einsum("bmn,bkn->mk", stacked_g, stacked_b)
    return _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)


def _matmul_grad_right(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if b.ndim == 2 and a.ndim > 2:
        return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    return _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)


# ---------------------------------------------------------------------------
# Pointwise operations


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def hadamard(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape("hadamard", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: ArrayLike, factor: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def shift(a: ArrayLike, offset: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data + offset, (a,), lambda g: (g,))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    decay = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    active = a.data > 0
    return _result(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))


def absolute(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def reciprocal(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data == 0):
        raise ValueError("reciprocal: input contains zeros")
    out = 1.0 / a.data
    return _result(out, (a,), lambda g: (-g * out * out,))


_ELEMENTWISE = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "rectifier": relu,
    "hadamard": hadamard,
    "add": add,
    "scale": scale,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch one of the named pointwise operations."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"Unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}")
    return fn(*args)


# ---------------------------------------------------------------------------
# Reductions and structural operations


def reduce_sum(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _result(out, (a,), backward_fn)


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: ArrayLike, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def broadcast_to(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise ValueError(f"broadcast_to: cannot broadcast {a.shape} to {shape}") from exc
    return _result(out, (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise ValueError("concat: nothing to concatenate")
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in parts]
        raise ValueError(f"concat: incompatible shapes {shapes} along axis {axis}") from exc
    boundaries = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward_fn(g: np.ndarray):
        return tuple(np.split(g, boundaries, axis=axis))

    return _result(out, parts, backward_fn)


def gather(a: ArrayLike, index: Sequence[int], axis: int = 0) -> Tensor:
    """Select entries of ``a`` along ``axis`` (repeats allowed).

    Raises:
        ValueError: If an index is outside ``[0, a.shape[axis])``
    """
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    extent = a.shape[axis]
    if index.size and (index.min() < 0 or index.max() >= extent):
        raise ValueError(
            f"gather: index out of range for axis {axis} with extent {extent}: "
            f"min={index.min()}, max={index.max()}"
        )
    out = np.take(a.data, index, axis=axis)

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(a.data)
        np.add.at(np.moveaxis(grad, axis, 0), index, np.moveaxis(g, axis, 0))
        return (grad,)

    return _result(out, (a,), backward_fn)


def entmax(a: ArrayLike, alpha: float, axis: int = -1) -> Tensor:
    """Apply alpha-entmax independently along ``axis``."""
    a = as_tensor(a)
    out = entmax_fn.entmax_along_axis(a.data, alpha, axis=axis)
    return _result(
        out,
        (a,),
        lambda g: (entmax_fn.entmax_backward_along_axis(out, g, alpha, axis=axis),),
    )


__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "backward",
    "current_tape",
    "as_tensor",
    "matmul",
    "add",
    "sub",
    "hadamard",
    "scale",
    "shift",
    "sigmoid",
    "tanh",
    "relu",
    "absolute",
    "square",
    "reciprocal",
    "elementwise",
    "reduce_sum",
    "reshape",
    "transpose",
    "broadcast_to",
    "concat",
    "gather",
    "entmax",
]
