"""The PhySL primitive vocabulary.

Each kind is either *pure* (children may be evaluated concurrently; the apply
function sees only resolved values) or *sequencing* (the executor runs the
children in a fixed order and may write frame slots). Sequencing kinds have no
apply function here; their semantics live in the executor, which owns the
frame and the ordering rules.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from . import values as V


@dataclass(frozen=True)
class PrimitiveKind:
    name: str
    min_args: int
    max_args: int | None  # None means variadic
    pure: bool
    apply: Callable | None = None
    foldable: bool = False

    def accepts(self, n: int) -> bool:
        return n >= self.min_args and (self.max_args is None or n <= self.max_args)

    def arity_text(self) -> str:
        if self.max_args is None:
            return f"at least {self.min_args}"
        if self.min_args == self.max_args:
            return str(self.min_args)
        return f"{self.min_args} to {self.max_args}"


def _sleep_ms(ms):
    """Diagnostic primitive: block the worker for ``ms`` milliseconds."""
    if not V.is_scalar_number(ms) or ms < 0:
        raise V.DatumTypeError("sleep_ms expects a non-negative number")
    time.sleep(ms / 1000.0)
    return ms


def _binary(op):
    return lambda a, b: V.broadcast_elementwise(op, a, b)


def _compare(op):
    return lambda a, b: V.compare(op, a, b)


def _unary(op):
    return lambda a: V.elementwise_unary(op, a)


_PURE = [
    PrimitiveKind("add", 2, 2, True, _binary("add"), foldable=True),
    PrimitiveKind("sub", 2, 2, True, _binary("sub"), foldable=True),
    PrimitiveKind("mul", 2, 2, True, _binary("mul"), foldable=True),
    PrimitiveKind("div", 2, 2, True, _binary("div"), foldable=True),
    PrimitiveKind("neg", 1, 1, True, _unary("neg"), foldable=True),
    PrimitiveKind("lt", 2, 2, True, _compare("lt"), foldable=True),
    PrimitiveKind("le", 2, 2, True, _compare("le"), foldable=True),
    PrimitiveKind("gt", 2, 2, True, _compare("gt"), foldable=True),
    PrimitiveKind("ge", 2, 2, True, _compare("ge"), foldable=True),
    PrimitiveKind("eq", 2, 2, True, _compare("eq"), foldable=True),
    PrimitiveKind("ne", 2, 2, True, _compare("ne"), foldable=True),
    PrimitiveKind("exp", 1, 1, True, _unary("exp")),
    PrimitiveKind("log", 1, 1, True, _unary("log")),
    PrimitiveKind("dot", 2, 2, True, V.dot),
    PrimitiveKind("transpose", 1, 1, True, V.transpose),
    PrimitiveKind("solve", 2, 2, True, V.solve),
    PrimitiveKind("sum", 1, 1, True, V.total),
    PrimitiveKind("identity", 1, 1, True, V.identity),
    PrimitiveKind("zeros", 1, 1, True, V.zeros),
    PrimitiveKind("diag", 1, 1, True, V.diag),
    PrimitiveKind("shape", 2, 2, True, V.shape_of),
    PrimitiveKind("random", 2, 2, True, V.random),
    PrimitiveKind("list", 0, None, True, lambda *items: tuple(items)),
    PrimitiveKind("vector", 1, 1, True, V.to_vector),
    PrimitiveKind("matrix", 1, 1, True, V.to_matrix),
    PrimitiveKind("slice_row", 2, 2, True, V.slice_row),
    PrimitiveKind("sleep_ms", 1, 1, True, _sleep_ms),
]

# Sequencing / binding forms. define and store take a name plus a value;
# store_row takes a name, a row index and a row vector.
_SEQUENCING = [
    PrimitiveKind("block", 1, None, False),
    PrimitiveKind("if", 2, 3, False),
    PrimitiveKind("while", 2, 2, False),
    PrimitiveKind("define", 2, 2, False),
    PrimitiveKind("store", 2, 2, False),
    PrimitiveKind("store_row", 3, 3, False),
]

# Tree-only kinds produced by the compiler.
CONST = PrimitiveKind("const", 0, 0, True)
VAR = PrimitiveKind("var", 0, 0, True)
CALL = PrimitiveKind("call", 0, None, True)

PRIMITIVES: dict[str, PrimitiveKind] = {k.name: k for k in _PURE + _SEQUENCING}
ALL_KINDS: dict[str, PrimitiveKind] = {**PRIMITIVES, "const": CONST, "var": VAR, "call": CALL}
SEQUENCING = frozenset(k.name for k in _SEQUENCING)
BINDING = frozenset({"define", "store", "store_row"})


def is_pure(kind: str) -> bool:
    return ALL_KINDS[kind].pure
