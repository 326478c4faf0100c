"""Error hierarchy shared by the frontend, compiler and runtime.

Every error has a ``code`` (the name printed in diagnostics) and an optional
source span. The executor attaches the span of the failing node when a kernel
raises without one.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SourceSpan:
    line: int
    col: int
    byte_len: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class FutError(Exception):
    code = "Error"

    def __init__(self, message: str, span: SourceSpan | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def with_span(self, span: SourceSpan | None) -> FutError:
        if self.span is None and span is not None:
            self.span = span
        return self

    def diagnostic(self, path: str | None = None) -> str:
        where = []
        if path:
            where.append(path)
        if self.span is not None:
            where.append(str(self.span))
        prefix = ":".join(where)
        text = f"{self.code}: {self.message}"
        return f"{prefix}: {text}" if prefix else text

    def __str__(self) -> str:
        return self.diagnostic()


# -- syntax -----------------------------------------------------------------

class LexError(FutError):
    code = "LexError"


class ParseError(FutError):
    code = "ParseError"


class BadIndentation(ParseError):
    code = "IndentationError"


class UnsupportedSyntax(ParseError):
    code = "UnsupportedSyntax"


class UnknownCall(FutError):
    code = "UnknownCall"


class ReturnNotTerminal(FutError):
    code = "ReturnNotTerminal"


# -- compile time -----------------------------------------------------------

class CompileError(FutError):
    code = "CompileError"


class UnknownIdentifier(CompileError):
    code = "UnknownIdentifier"


class ArityError(CompileError):
    code = "ArityError"


class SideEffectPosition(CompileError):
    code = "SideEffectPosition"


class DuplicateDefinition(CompileError):
    code = "DuplicateDefinition"


# -- run time ---------------------------------------------------------------

class EvalError(FutError):
    code = "EvalError"


class ShapeMismatch(EvalError):
    code = "ShapeMismatch"


class DatumTypeError(EvalError):
    code = "TypeError"


class Singular(EvalError):
    code = "Singular"


class AxisOutOfRange(EvalError):
    code = "AxisOutOfRange"


class NegativeExtent(EvalError):
    code = "NegativeExtent"


class RowOutOfRange(EvalError):
    code = "RowOutOfRange"


class RaggedMatrix(EvalError):
    code = "RaggedMatrix"


class IntOverflow(EvalError):
    code = "IntOverflow"


class DepthLimit(EvalError):
    code = "DepthLimit"


class UnboundVariable(EvalError):
    code = "UnboundVariable"


class InternalError(EvalError):
    """A non-language exception escaped a primitive."""

    code = "InternalError"
