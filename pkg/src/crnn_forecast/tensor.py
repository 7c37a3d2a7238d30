"""Dense array substrate: immutable 64-bit tensors of rank 1-3, row-major.

Everything the layer stack computes on is carried by :class:`Tensor` at
module boundaries. Construction validates shape and finiteness, so a NaN or
Inf produced anywhere surfaces as a :class:`NumericError` instead of
propagating silently into metrics.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NumericError",
    "ShapeError",
    "Tensor",
    "add",
    "concat_flatten",
    "elementwise",
    "matmul",
    "mul",
    "scale",
    "sigmoid",
    "sub",
    "tanh",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on a raw ndarray."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tensor:
    """Immutable dense array of 64-bit reals with rank 1, 2, or 3.

    Data is stored row-major. Instances are safe to share across threads;
    all operations return new tensors.
    """

    __slots__ = ("_a",)

    def __init__(self, values, shape: Sequence[int] | None = None):
        a = np.array(values, dtype=np.float64)
        if shape is not None:
            try:
                a = a.reshape(tuple(int(d) for d in shape))
            except ValueError as exc:
                raise ShapeError(
                    f"cannot shape {a.size} values into {tuple(shape)}"
                ) from exc
        if a.ndim < 1 or a.ndim > 3:
            raise ShapeError(f"tensor rank must be 1..3, got rank {a.ndim}")
        if a.size == 0:
            raise ShapeError("tensor extents must be positive")
        if not np.isfinite(a).all():
            raise NumericError("tensor construction: non-finite values")
        a.setflags(write=False)
        self._a = a

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def rank(self) -> int:
        return self._a.ndim

    @property
    def size(self) -> int:
        return self._a.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the elements (read-only)."""
        return self._a.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        """The underlying read-only ndarray."""
        return self._a

    def tolist(self):
        return self._a.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self._a!r})"


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.rank != 2 or b.rank != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions of {a.shape} and {b.shape} differ")
    return Tensor(a.array @ b.array)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "add")
    return Tensor(a.array + b.array)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "sub")
    return Tensor(a.array - b.array)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "mul")
    return Tensor(a.array * b.array)


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.array * float(c))


def sigmoid(a: Tensor) -> Tensor:
    return Tensor(sigmoid_values(a.array))


def tanh(a: Tensor) -> Tensor:
    return Tensor(np.tanh(a.array))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "sigmoid": sigmoid,
    "tanh": tanh,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch a pointwise operation by name (add/sub/mul/sigmoid/tanh/scale)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def concat_flatten(cubes: Iterable[Tensor]) -> Tensor:
    """Flatten each tensor row-major and concatenate them in input order."""
    parts = [c.data for c in cubes]
    if not parts:
        raise ValueError("concat_flatten: empty input")
    return Tensor(np.concatenate(parts))
