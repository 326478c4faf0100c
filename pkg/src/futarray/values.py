"""Runtime values and the numeric kernels every primitive delegates to.

A Datum is represented by plain Python objects:

    Nil -> None          Bool  -> bool         Int    -> int (signed 64-bit)
    Float -> float       Str   -> str          List   -> tuple of Datum
    Vector -> 1-D float64 ndarray              Matrix -> 2-D float64 ndarray

Arrays are C-contiguous and marked read-only; every kernel returns a fresh
array. Traversal is row-major everywhere and reductions are serial, so the
same inputs always give bitwise-identical outputs.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from . import _kernels
from .errors import (
    AxisOutOfRange,
    DatumTypeError,
    IntOverflow,
    NegativeExtent,
    RaggedMatrix,
    RowOutOfRange,
    ShapeMismatch,
    Singular,
)

Datum = Union[None, bool, int, float, str, tuple, np.ndarray]

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class Shape:
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.dims) > 2:
            raise ValueError("rank must be 0, 1 or 2")
        if any(d < 0 for d in self.dims):
            raise ValueError("extents must be non-negative")

    @property
    def rank(self) -> int:
        return len(self.dims)

    def __str__(self) -> str:
        if not self.dims:
            return "scalar"
        return "(" + ", ".join(str(d) for d in self.dims) + ")"


# -- classification ---------------------------------------------------------

def kind_of(d: Any) -> str:
    if d is None:
        return "nil"
    if isinstance(d, bool):
        return "bool"
    if isinstance(d, int):
        return "int"
    if isinstance(d, float):
        return "float"
    if isinstance(d, str):
        return "str"
    if isinstance(d, tuple):
        return "list"
    if isinstance(d, np.ndarray):
        if d.ndim == 1:
            return "vector"
        if d.ndim == 2:
            return "matrix"
    raise TypeError(f"not a datum: {d!r}")


def is_scalar_number(d: Any) -> bool:
    return isinstance(d, (int, float)) and not isinstance(d, bool)


def is_array(d: Any) -> bool:
    return isinstance(d, np.ndarray)


def shape_of_datum(d: Datum) -> Shape:
    if isinstance(d, np.ndarray):
        return Shape(tuple(d.shape))
    return Shape()


def freeze(arr: np.ndarray) -> np.ndarray:
    """Return ``arr`` as a read-only, C-contiguous float64 array."""
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def make_vector(values) -> np.ndarray:
    return freeze(np.array(values, dtype=np.float64).reshape(-1))


def make_matrix(rows) -> np.ndarray:
    rows = [list(r) for r in rows]
    width = len(rows[0]) if rows else 0
    if any(len(r) != width for r in rows):
        raise RaggedMatrix("rows have different lengths")
    return freeze(np.array(rows, dtype=np.float64).reshape(len(rows), width))


def check_int(value: int) -> int:
    if not INT_MIN <= value <= INT_MAX:
        raise IntOverflow(f"integer result {value} does not fit in 64 bits")
    return value


def _numeric(d: Datum, what: str) -> None:
    if not (is_scalar_number(d) or is_array(d)):
        raise DatumTypeError(f"{what} expects numeric operands, got {kind_of(d)}")


def _require_int(d: Datum, what: str) -> int:
    if not isinstance(d, int) or isinstance(d, bool):
        raise DatumTypeError(f"{what} expects an int, got {kind_of(d)}")
    return d


# -- elementwise ------------------------------------------------------------

_INT_OPS = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}
_UFUNCS = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}


def broadcast_elementwise(op: str, a: Datum, b: Datum) -> Datum:
    """Apply ``op`` (add/sub/mul/div) with scalar broadcasting.

    Two ints stay integral except under ``div``; any float promotes. Division
    by zero yields IEEE inf/NaN rather than an error.
    """
    ufunc = _UFUNCS[op]
    _numeric(a, op)
    _numeric(b, op)
    if not is_array(a) and not is_array(b):
        if isinstance(a, int) and isinstance(b, int) and op != "div":
            return check_int(_INT_OPS[op](a, b))
        with np.errstate(all="ignore"):
            return float(ufunc(np.float64(a), np.float64(b)))
    if is_array(a) and is_array(b) and a.shape != b.shape:
        raise ShapeMismatch(
            f"{op}: shapes {shape_of_datum(a)} and {shape_of_datum(b)} differ"
        )
    lhs = a if is_array(a) else float(a)
    rhs = b if is_array(b) else float(b)
    with np.errstate(all="ignore"):
        return freeze(ufunc(lhs, rhs))


_UNARY = {"neg": np.negative, "exp": np.exp, "log": np.log}


def elementwise_unary(op: str, a: Datum) -> Datum:
    ufunc = _UNARY[op]
    _numeric(a, op)
    if op == "neg" and isinstance(a, int):
        return check_int(-a)
    with np.errstate(all="ignore"):
        if is_array(a):
            return freeze(ufunc(a))
        return float(ufunc(np.float64(a)))


_COMPARE = {
    "lt": operator.lt, "le": operator.le, "gt": operator.gt,
    "ge": operator.ge, "eq": operator.eq, "ne": operator.ne,
}


def compare(op: str, a: Datum, b: Datum) -> bool:
    """Scalar comparison. Int against Float compares as Float."""
    fn = _COMPARE[op]
    if is_array(a) or is_array(b):
        raise DatumTypeError(f"{op} compares scalars only")
    if is_scalar_number(a) and is_scalar_number(b):
        if isinstance(a, float) or isinstance(b, float):
            return fn(float(a), float(b))
        return fn(a, b)
    if op in ("eq", "ne"):
        same = kind_of(a) == kind_of(b) and a == b
        return same if op == "eq" else not same
    if isinstance(a, str) and isinstance(b, str):
        return fn(a, b)
    raise DatumTypeError(f"{op} cannot order {kind_of(a)} and {kind_of(b)}")


def as_condition(d: Datum) -> bool:
    if isinstance(d, bool):
        return d
    if isinstance(d, int) and d in (0, 1):
        return bool(d)
    raise DatumTypeError(f"condition must be bool (or int 0/1), got {kind_of(d)}")


# -- linear algebra ---------------------------------------------------------

def dot(a: Datum, b: Datum) -> Datum:
    if not (is_array(a) and is_array(b)):
        raise DatumTypeError(
            f"dot expects vector/matrix operands, got {kind_of(a)} and {kind_of(b)}"
        )
    sa, sb = shape_of_datum(a), shape_of_datum(b)
    if sa.rank == 1 and sb.rank == 1:
        if sa != sb:
            raise ShapeMismatch(f"dot: vector lengths {sa} and {sb} differ")
        return float(_kernels.dot_vv(a, b))
    if sa.rank == 2 and sb.rank == 1:
        if sa.dims[1] != sb.dims[0]:
            raise ShapeMismatch(f"dot: matrix {sa} cannot multiply vector {sb}")
        return freeze(_kernels.dot_mv(a, b))
    if sa.rank == 1 and sb.rank == 2:
        if sa.dims[0] != sb.dims[0]:
            raise ShapeMismatch(f"dot: vector {sa} cannot multiply matrix {sb}")
        return freeze(_kernels.dot_vm(a, b))
    if sa.dims[1] != sb.dims[0]:
        raise ShapeMismatch(f"dot: inner dimensions of {sa} and {sb} differ")
    return freeze(_kernels.dot_mm(a, b))


def transpose(a: Datum) -> Datum:
    if not is_array(a):
        raise DatumTypeError(f"transpose expects vector or matrix, got {kind_of(a)}")
    if a.ndim == 1:
        return a
    return freeze(a.T.copy())


def solve(a: Datum, b: Datum) -> Datum:
    """Gaussian elimination with partial pivoting (first row wins ties)."""
    if not (is_array(a) and a.ndim == 2) or not is_array(b):
        raise DatumTypeError("solve expects a matrix and a vector or matrix")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeMismatch(f"solve: matrix {shape_of_datum(a)} is not square")
    if b.shape[0] != n:
        raise ShapeMismatch(
            f"solve: right-hand side {shape_of_datum(b)} does not match {n} rows"
        )
    rhs = b.reshape(n, -1) if b.ndim == 1 else b
    x, failed = _kernels.gauss_solve(a, np.ascontiguousarray(rhs))
    if failed >= 0:
        raise Singular(f"solve: pivot in column {failed} is below {_kernels.SINGULAR_PIVOT}")
    return freeze(x.reshape(n) if b.ndim == 1 else x)


# -- builders ---------------------------------------------------------------

def _extents(shape: Datum, what: str) -> tuple[int, ...]:
    if isinstance(shape, tuple):
        dims = tuple(_require_int(d, what) for d in shape)
        if len(dims) not in (1, 2):
            raise DatumTypeError(f"{what}: shape must have 1 or 2 extents")
    else:
        dims = (_require_int(shape, what),)
    for d in dims:
        if d < 0:
            raise NegativeExtent(f"{what}: negative extent {d}")
    return dims


def identity(n: Datum) -> np.ndarray:
    n = _require_int(n, "identity")
    if n < 0:
        raise NegativeExtent(f"identity: negative extent {n}")
    return freeze(np.eye(n))


def zeros(shape: Datum) -> np.ndarray:
    return freeze(np.zeros(_extents(shape, "zeros")))


def diag(v: Datum) -> np.ndarray:
    if not (is_array(v) and v.ndim == 1):
        raise DatumTypeError(f"diag expects a vector, got {kind_of(v)}")
    return freeze(np.diag(v))


def total(a: Datum) -> float:
    _numeric(a, "sum")
    if is_array(a):
        return float(_kernels.serial_sum(a.reshape(-1)))
    return float(a)


def shape_of(a: Datum, axis: Datum) -> int:
    axis = _require_int(axis, "shape")
    dims = shape_of_datum(a).dims
    if not 0 <= axis < len(dims):
        raise AxisOutOfRange(f"shape: axis {axis} out of range for rank {len(dims)}")
    return dims[axis]


def random(shape: Datum, seed: Datum) -> np.ndarray:
    """Uniform [0, 1) values from the splitmix64 stream seeded by ``seed``."""
    dims = _extents(shape, "random")
    seed = _require_int(seed, "random") % (1 << 64)
    count = int(np.prod(dims))
    flat = _kernels.splitmix_uniform(np.uint64(seed), count)
    return freeze(flat.reshape(dims))


def to_vector(items: Datum) -> np.ndarray:
    if is_array(items) and items.ndim == 1:
        return items
    if not isinstance(items, tuple):
        raise DatumTypeError(f"vector expects a list, got {kind_of(items)}")
    for x in items:
        if not is_scalar_number(x):
            raise DatumTypeError(f"vector elements must be numbers, got {kind_of(x)}")
    return make_vector([float(x) for x in items])


def to_matrix(rows: Datum) -> np.ndarray:
    if is_array(rows) and rows.ndim == 2:
        return rows
    if not isinstance(rows, tuple):
        raise DatumTypeError(f"matrix expects a list of rows, got {kind_of(rows)}")
    return make_matrix([to_vector(r) for r in rows])


def _row_index(m: np.ndarray, i: Datum) -> int:
    i = _require_int(i, "row index")
    if not 0 <= i < m.shape[0]:
        raise RowOutOfRange(f"row {i} out of range for {m.shape[0]} rows")
    return i


def slice_row(m: Datum, i: Datum) -> Datum:
    """Row ``i`` of a matrix as a vector (element of a vector, item of a list)."""
    if isinstance(m, tuple):
        i = _require_int(i, "row index")
        if not 0 <= i < len(m):
            raise RowOutOfRange(f"index {i} out of range for list of {len(m)}")
        return m[i]
    if not is_array(m):
        raise DatumTypeError(f"cannot index {kind_of(m)}")
    i = _row_index(m, i)
    if m.ndim == 1:
        return float(m[i])
    return freeze(m[i].copy())


def replace_row(m: Datum, i: Datum, v: Datum) -> np.ndarray:
    if not (is_array(m) and m.ndim == 2):
        raise DatumTypeError(f"store_row target must be a matrix, got {kind_of(m)}")
    i = _row_index(m, i)
    if not (is_array(v) and v.ndim == 1):
        raise DatumTypeError(f"store_row value must be a vector, got {kind_of(v)}")
    if v.shape[0] != m.shape[1]:
        raise ShapeMismatch(
            f"store_row: vector of length {v.shape[0]} for {m.shape[1]} columns"
        )
    out = m.copy()
    out[i] = v
    return freeze(out)


# -- equality and text ------------------------------------------------------

def bitwise_equal(a: Datum, b: Datum) -> bool:
    """Structural equality comparing floats by bit pattern."""
    if kind_of(a) != kind_of(b):
        return False
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.array_equal(a.view(np.uint64), b.view(np.uint64))
    if isinstance(a, float):
        return np.float64(a).view(np.uint64) == np.float64(b).view(np.uint64)
    if isinstance(a, tuple):
        return len(a) == len(b) and all(bitwise_equal(x, y) for x, y in zip(a, b))
    return a == b


def to_csv(d: Datum) -> str:
    """Comma-separated, shortest round-trip decimals; one matrix row per line."""
    if not is_array(d):
        raise DatumTypeError(f"only vectors and matrices export to CSV, got {kind_of(d)}")
    rows = [d] if d.ndim == 1 else list(d)
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in rows)


def from_csv(text: str) -> np.ndarray:
    """A single line reads as a vector, several lines as a matrix."""
    lines = [ln.strip() for ln in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    try:
        rows = [[float(x) for x in ln.split(",")] if ln else [] for ln in lines]
    except ValueError as exc:
        raise DatumTypeError(f"bad CSV number: {exc}") from None
    if len(rows) == 1:
        return make_vector(rows[0])
    return make_matrix(rows)


def format_datum(d: Datum) -> str:
    if d is None:
        return "nil"
    if isinstance(d, bool):
        return "true" if d else "false"
    if isinstance(d, (int, str)):
        return str(d)
    if isinstance(d, float):
        return repr(d)
    if isinstance(d, np.ndarray):
        return to_csv(d).rstrip("\n")
    if all(not isinstance(x, (tuple, np.ndarray)) for x in d):
        return "list(" + ", ".join(format_datum(x) for x in d) + ")"
    return "\n\n".join(format_datum(x) for x in d)
