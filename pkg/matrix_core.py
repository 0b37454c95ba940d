"""
Exact integer matrices, flattening and the four transformation operators.

The functions here are the cleartext reference for everything that runs on the
slot emulator: sigma, tau, eps and omega follow their index definitions, and
``elementwise_mm`` assembles a general matrix product out of them using only
element-wise multiplications and additions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
import logging

import numpy as np

from hegemm_errors import ArithmeticOverflowError, DimensionMismatchError

log = logging.getLogger(__name__)

INT64_MAX = int(np.iinfo(np.int64).max)
INT64_MIN = int(np.iinfo(np.int64).min)


def as_int64(values, what: str = "value") -> np.ndarray:
    """
    Convert integer input to an int64 array without silent truncation.

    :param values: Sequence, nested sequence or array of integers.
    :param str what: Name used in error messages.
    :raises ArithmeticOverflowError: If a value does not fit into int64.
    :raises TypeError: If a value is not integral.
    :return np.ndarray: A new int64 array.
    """
    array = np.asarray(values)
    if array.dtype == np.int64:
        return array.copy()
    if array.dtype.kind == "b":
        return array.astype(np.int64)
    if array.dtype.kind in "iu":
        if array.size and (int(array.max()) > INT64_MAX or int(array.min()) < INT64_MIN):
            raise ArithmeticOverflowError(f"{what} does not fit into 64 bit integers")
        return array.astype(np.int64)
    if array.dtype.kind == "O" or array.size == 0:
        try:
            return np.array(array.tolist(), dtype=np.int64).reshape(array.shape)
        except OverflowError as e:
            raise ArithmeticOverflowError(f"{what} does not fit into 64 bit integers") from e
    raise TypeError(f"{what} must contain integers, got {array.dtype}")


def _abs_max(x: np.ndarray) -> int:
    if x.size == 0:
        return 0
    return max(int(x.max()), -int(x.min()))


def checked_add(x: np.ndarray, y: np.ndarray, modulus: int | None = None) -> np.ndarray:
    """Element-wise sum that raises instead of wrapping around."""
    if modulus is not None:
        return (x % modulus + y % modulus) % modulus
    if _abs_max(x) + _abs_max(y) <= INT64_MAX:
        return x + y
    with np.errstate(over="ignore"):
        result = x + y
    # same-sign operands whose sum flips sign wrapped around
    wrapped = ((x >= 0) == (y >= 0)) & ((result >= 0) != (x >= 0))
    if wrapped.any():
        raise ArithmeticOverflowError("integer overflow in element-wise addition")
    return result


def checked_multiply(x: np.ndarray, y: np.ndarray, modulus: int | None = None) -> np.ndarray:
    """Element-wise product that raises instead of wrapping around."""
    if modulus is not None:
        return (x % modulus) * (y % modulus) % modulus
    if _abs_max(x) * _abs_max(y) <= INT64_MAX:
        return x * y
    exact = x.astype(object) * y.astype(object)
    return as_int64(exact, "element-wise product")


class FlattenOrder(Enum):
    """Serialisation order of a matrix into slots."""

    COLUMN_MAJOR = "col"
    ROW_MAJOR = "row"

    @property
    def numpy_order(self) -> str:
        return "F" if self is FlattenOrder.COLUMN_MAJOR else "C"

    @classmethod
    def parse(cls, text: str) -> FlattenOrder:
        for order in cls:
            if text.lower() in (order.value, order.name.lower(), order.name.lower().replace("_", "-")):
                return order
        raise ValueError(f"Unknown flatten order '{text}'")


@dataclass(frozen=True, eq=False)
class Matrix:
    """
    Dense exact-integer matrix stored row-major.

    :param int rows: Number of rows, positive.
    :param int cols: Number of columns, positive.
    :param data: Row-major values, ``rows * cols`` integers.
    """

    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionMismatchError(f"Matrix dimensions must be positive, got {self.rows}x{self.cols}")
        data = as_int64(self.data, "matrix data").reshape(-1)
        if data.size != self.rows * self.cols:
            raise DimensionMismatchError(
                f"Matrix {self.rows}x{self.cols} needs {self.rows * self.cols} values, got {data.size}"
            )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_rows(cls, rows) -> Matrix:
        array = as_int64(rows, "matrix data")
        if array.ndim != 2:
            raise DimensionMismatchError("Matrix rows must form a two dimensional array")
        return cls(array.shape[0], array.shape[1], array)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> Matrix:
        return cls(rows, cols, np.zeros(rows * cols, dtype=np.int64))

    @classmethod
    def identity(cls, size: int) -> Matrix:
        return cls.from_rows(np.eye(size, dtype=np.int64))

    @classmethod
    def random(cls, rng: np.random.Generator, rows: int, cols: int, value_range: int = 9) -> Matrix:
        """Uniform random entries in ``[-value_range, value_range]``."""
        return cls(rows, cols, rng.integers(-value_range, value_range, size=rows * cols, endpoint=True))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def array(self) -> np.ndarray:
        """Read-only ``rows x cols`` view of the data."""
        return self.data.reshape(self.rows, self.cols)

    def to_rows(self) -> list[list[int]]:
        return self.array.tolist()

    def __getitem__(self, index: tuple[int, int]) -> int:
        i, j = index
        return int(self.array[i, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols}, {self.to_rows()})"

    def submatrix(self, row_start: int, row_stop: int, col_start: int, col_stop: int) -> Matrix:
        return Matrix.from_rows(self.array[row_start:row_stop, col_start:col_stop])

    def pad(self, rows: int, cols: int) -> Matrix:
        """Zero-pad to ``rows x cols`` (bottom and right)."""
        if rows < self.rows or cols < self.cols:
            raise DimensionMismatchError(f"Cannot pad {self.rows}x{self.cols} to {rows}x{cols}")
        padded = np.zeros((rows, cols), dtype=np.int64)
        padded[: self.rows, : self.cols] = self.array
        return Matrix.from_rows(padded)

    def crop(self, rows: int, cols: int) -> Matrix:
        return self.submatrix(0, rows, 0, cols)

    def hadamard(self, other: Matrix, modulus: int | None = None) -> Matrix:
        _require_same_shape(self, other)
        return Matrix(self.rows, self.cols, checked_multiply(self.data, other.data, modulus))

    def add(self, other: Matrix, modulus: int | None = None) -> Matrix:
        _require_same_shape(self, other)
        return Matrix(self.rows, self.cols, checked_add(self.data, other.data, modulus))


def _require_same_shape(a: Matrix, b: Matrix):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Shape mismatch {a.rows}x{a.cols} vs {b.rows}x{b.cols}")


@dataclass(frozen=True, eq=False)
class FlatVector:
    """
    A matrix serialised into slot order.

    :param values: Flattened values, ``logical_rows * logical_cols`` integers.
    :param int logical_rows: Rows of the matrix the values came from.
    :param int logical_cols: Columns of the matrix the values came from.
    :param FlattenOrder order: Serialisation order.
    """

    values: np.ndarray
    logical_rows: int
    logical_cols: int
    order: FlattenOrder = FlattenOrder.COLUMN_MAJOR

    def __post_init__(self):
        values = as_int64(self.values, "vector values").reshape(-1)
        if values.size != self.logical_rows * self.logical_cols:
            raise DimensionMismatchError(
                f"Vector of {values.size} values cannot hold a {self.logical_rows}x{self.logical_cols} matrix"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def of(cls, values) -> FlatVector:
        """A plain vector, treated as a single row."""
        values = as_int64(values, "vector values").reshape(-1)
        return cls(values, 1, values.size, FlattenOrder.ROW_MAJOR)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlatVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def flatten(a: Matrix, order: FlattenOrder) -> FlatVector:
    return FlatVector(a.array.flatten(order=order.numpy_order), a.rows, a.cols, order)


def unflatten(v: FlatVector) -> Matrix:
    array = np.reshape(v.values, (v.logical_rows, v.logical_cols), order=v.order.numpy_order)
    return Matrix.from_rows(array)


def sigma(a: Matrix) -> Matrix:
    """Rotate row ``i`` left by ``i``: ``result[i][j] = a[i][(i+j) mod l]``."""
    rows = np.arange(a.rows)[:, None]
    cols = (rows + np.arange(a.cols)[None, :]) % a.cols
    return Matrix.from_rows(a.array[rows, cols])


def tau(b: Matrix) -> Matrix:
    """Rotate column ``j`` up by ``j``: ``result[i][j] = b[(i+j) mod l][j]``."""
    cols = np.arange(b.cols)[None, :]
    rows = (np.arange(b.rows)[:, None] + cols) % b.rows
    return Matrix.from_rows(b.array[rows, cols])


def eps(a: Matrix, k: int, out_rows: int, out_cols: int) -> Matrix:
    """
    Shift ``a`` left by ``k`` columns into an ``out_rows x out_cols`` matrix.

    Columns repeat cyclically (or are cropped) when ``out_cols`` differs from
    ``a.cols``: ``result[i][j] = a[i][(j+k) mod l]``.
    """
    if a.rows != out_rows:
        raise DimensionMismatchError(f"eps keeps the row count: source has {a.rows} rows, target {out_rows}")
    cols = (np.arange(out_cols) + k) % a.cols
    return Matrix.from_rows(a.array[:, cols])


def omega(b: Matrix, k: int, out_rows: int, out_cols: int) -> Matrix:
    """
    Shift ``b`` up by ``k`` rows into an ``out_rows x out_cols`` matrix.

    Rows repeat cyclically (or are cropped): ``result[i][j] = b[(i+k) mod l][j]``.
    """
    if b.cols != out_cols:
        raise DimensionMismatchError(f"omega keeps the column count: source has {b.cols} cols, target {out_cols}")
    rows = (np.arange(out_rows) + k) % b.rows
    return Matrix.from_rows(b.array[rows, :])


def _require_compatible(a: Matrix, b: Matrix):
    if a.cols != b.rows:
        raise DimensionMismatchError(f"Cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")


def naive_matmul(a: Matrix, b: Matrix, modulus: int | None = None) -> Matrix:
    """Triple loop product over Python integers, the reference oracle."""
    _require_compatible(a, b)
    a_rows = a.to_rows()
    b_cols = b.array.T.tolist()
    result = [[sum(x * y for x, y in zip(row, col)) for col in b_cols] for row in a_rows]
    if modulus is not None:
        result = [[value % modulus for value in row] for row in result]
    return Matrix(a.rows, b.cols, as_int64(result, "matrix product"))


def partial_product(a: Matrix, b: Matrix, k: int, modulus: int | None = None) -> Matrix:
    """One term ``eps^k(sigma(a)) * omega^k(tau(b))`` of the element-wise sum."""
    _require_compatible(a, b)
    return eps(sigma(a), k, a.rows, b.cols).hadamard(omega(tau(b), k, a.rows, b.cols), modulus)


def elementwise_mm(a: Matrix, b: Matrix, modulus: int | None = None) -> Matrix:
    """Matrix product as the sum of ``l`` element-wise partial products."""
    _require_compatible(a, b)
    result = Matrix.zeros(a.rows, b.cols)
    for k in range(a.cols):
        result = result.add(partial_product(a, b, k, modulus), modulus)
    return result


def duplicate_vertical(a: Matrix, t: int) -> Matrix:
    """Stack ``t`` copies of ``a`` on top of each other."""
    if t < 1:
        raise ValueError(f"Copy count must be at least 1, got {t}")
    return Matrix.from_rows(np.tile(a.array, (t, 1)))


def duplicate_horizontal(b: Matrix, t: int) -> Matrix:
    """Concatenate ``t`` copies of ``b`` side by side."""
    if t < 1:
        raise ValueError(f"Copy count must be at least 1, got {t}")
    return Matrix.from_rows(np.tile(b.array, (1, t)))
