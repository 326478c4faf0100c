"""PyLite frontend: a restricted Python-style surface lowered to PhySL.

PyLite source is syntactically Python, so :func:`parse_pylite` reuses the
standard ``ast`` parser and then converts the tree into the small node set
below, rejecting everything outside the accepted subset. :func:`lower`
turns one function into a PhySL ``define``.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Union

from . import physl
from .errors import (
    BadIndentation,
    ParseError,
    ReturnNotTerminal,
    SourceSpan,
    UnknownCall,
    UnknownIdentifier,
    UnsupportedSyntax,
)

_SPAN = dict(default=None, compare=False, repr=False)


# -- PyLite AST -------------------------------------------------------------

@dataclass(frozen=True)
class Name:
    id: str
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Const:
    value: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class BinOp:
    op: str  # add sub mul div dot
    left: object
    right: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Compare:
    op: str  # lt le gt ge eq ne
    left: object
    right: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Neg:
    operand: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Call:
    """``f(args)``; ``func`` is a plain name or an ``np.``-qualified path."""

    func: str
    args: tuple
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Transpose:
    value: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class ShapeOf:
    value: object
    axis: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Index:
    value: object
    index: object
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class ListDisplay:
    items: tuple
    span: SourceSpan | None = field(**_SPAN)


Expr = Union[Name, Const, BinOp, Compare, Neg, Call, Transpose, ShapeOf, Index, ListDisplay]


@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr
    first_binding: bool = False
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class AugAssign:
    name: str
    op: str
    value: Expr
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class RowAssign:
    name: str
    index: Expr
    value: Expr
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class If:
    arms: tuple  # ((cond, body), ...)
    else_body: tuple | None
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class Return:
    value: Expr
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class ExprStmt:
    value: Expr
    span: SourceSpan | None = field(**_SPAN)


@dataclass(frozen=True)
class FuncDef:
    name: str
    params: tuple
    body: tuple
    span: SourceSpan | None = field(**_SPAN)


# -- parsing ----------------------------------------------------------------

_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div", ast.MatMult: "dot"}
_AUGOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div"}
_CMPOPS = {ast.Lt: "lt", ast.LtE: "le", ast.Gt: "gt", ast.GtE: "ge", ast.Eq: "eq", ast.NotEq: "ne"}

_CONSTRUCT_NAMES = {
    ast.For: "for", ast.AsyncFor: "async for", ast.With: "with", ast.Try: "try",
    ast.Raise: "raise", ast.Import: "import", ast.ImportFrom: "import",
    ast.ClassDef: "class", ast.Lambda: "lambda", ast.BoolOp: "boolean operator",
    ast.Break: "break", ast.Continue: "continue", ast.Pass: "pass",
    ast.Global: "global", ast.Nonlocal: "nonlocal", ast.Delete: "del",
    ast.Assert: "assert", ast.Yield: "yield", ast.YieldFrom: "yield",
    ast.Tuple: "tuple", ast.Dict: "dict", ast.Set: "set", ast.IfExp: "conditional expression",
    ast.ListComp: "comprehension", ast.GeneratorExp: "comprehension",
    ast.DictComp: "comprehension", ast.SetComp: "comprehension",
    ast.Starred: "starred expression", ast.Slice: "slice", ast.JoinedStr: "f-string",
    ast.AsyncFunctionDef: "async def", ast.Await: "await",
}

_LEADING_WS = re.compile(r"^[ \t]*", re.M)


def _span(node: ast.AST, source_lines: list[str]) -> SourceSpan:
    line = node.lineno
    text = source_lines[line - 1] if line - 1 < len(source_lines) else ""
    # ast offsets are UTF-8 byte offsets
    raw = text.encode("utf-8")
    col = len(raw[: node.col_offset].decode("utf-8", "replace")) + 1
    if getattr(node, "end_lineno", None) == line and node.end_col_offset is not None:
        nbytes = node.end_col_offset - node.col_offset
    else:
        nbytes = len(raw) - node.col_offset
    return SourceSpan(line, col, max(nbytes, 0))


def _unsupported(node: ast.AST, lines, what: str | None = None):
    name = what or _CONSTRUCT_NAMES.get(type(node), type(node).__name__.lower())
    return UnsupportedSyntax(f"'{name}' is not supported in PyLite", _span(node, lines))


class _Converter:
    def __init__(self, source: str):
        self.lines = source.splitlines()
        self.bound: set[str] = set()

    def span(self, node):
        return _span(node, self.lines)

    def funcdef(self, node: ast.AST) -> FuncDef:
        if not isinstance(node, ast.FunctionDef):
            if isinstance(node, (ast.Assign, ast.Expr, ast.AugAssign, ast.While, ast.If)):
                raise UnsupportedSyntax(
                    "top-level statements are not supported; wrap code in a def",
                    self.span(node),
                )
            raise _unsupported(node, self.lines)
        if node.decorator_list:
            raise _unsupported(node.decorator_list[0], self.lines, "decorator")
        a = node.args
        if a.vararg or a.kwarg or a.kwonlyargs or a.posonlyargs:
            raise _unsupported(node, self.lines, "variadic or keyword-only parameters")
        if a.defaults:
            raise _unsupported(a.defaults[0], self.lines, "default arguments")
        if node.returns is not None:
            raise _unsupported(node.returns, self.lines, "annotation")
        for arg in a.args:
            if arg.annotation is not None:
                raise _unsupported(arg.annotation, self.lines, "annotation")
        params = tuple(arg.arg for arg in a.args)
        if len(set(params)) != len(params):
            raise ParseError(f"duplicate parameter in {node.name}", self.span(node))
        self.bound = set(params)
        return FuncDef(node.name, params, self.block(node.body), self.span(node))

    def block(self, stmts) -> tuple:
        return tuple(self.stmt(s) for s in stmts)

    def stmt(self, node: ast.AST):
        sp = self.span(node)
        if isinstance(node, ast.Assign):
            if len(node.targets) != 1:
                raise _unsupported(node, self.lines, "chained assignment")
            target = node.targets[0]
            if isinstance(target, ast.Name):
                first = target.id not in self.bound
                self.bound.add(target.id)
                return Assign(target.id, self.expr(node.value), first, sp)
            if (isinstance(target, ast.Subscript) and isinstance(target.value, ast.Name)
                    and not isinstance(target.slice, (ast.Slice, ast.Tuple))):
                return RowAssign(target.value.id, self.expr(target.slice),
                                 self.expr(node.value), sp)
            raise _unsupported(target, self.lines, "assignment target")
        if isinstance(node, ast.AugAssign):
            if not isinstance(node.target, ast.Name):
                raise _unsupported(node.target, self.lines, "augmented assignment target")
            op = _AUGOPS.get(type(node.op))
            if op is None:
                raise _unsupported(node, self.lines, "augmented operator")
            return AugAssign(node.target.id, op, self.expr(node.value), sp)
        if isinstance(node, ast.While):
            if node.orelse:
                raise _unsupported(node, self.lines, "while-else")
            return While(self.expr(node.test), self.block(node.body), sp)
        if isinstance(node, ast.If):
            arms = []
            cur = node
            while True:
                arms.append((self.expr(cur.test), self.block(cur.body)))
                rest = cur.orelse
                if len(rest) == 1 and isinstance(rest[0], ast.If) and self._is_elif(rest[0]):
                    cur = rest[0]
                    continue
                else_body = self.block(rest) if rest else None
                break
            return If(tuple(arms), else_body, sp)
        if isinstance(node, ast.Return):
            if node.value is None:
                raise _unsupported(node, self.lines, "bare return")
            return Return(self.expr(node.value), sp)
        if isinstance(node, ast.Expr):
            return ExprStmt(self.expr(node.value), sp)
        if isinstance(node, ast.FunctionDef):
            raise _unsupported(node, self.lines, "nested def")
        raise _unsupported(node, self.lines)

    def _is_elif(self, node: ast.If) -> bool:
        line = self.lines[node.lineno - 1]
        return line.lstrip().startswith("elif")

    def expr(self, node: ast.AST):
        sp = self.span(node)
        if isinstance(node, ast.Name):
            if node.id == "np":
                raise UnsupportedSyntax("'np' is only usable as a call prefix", sp)
            return Name(node.id, sp)
        if isinstance(node, ast.Constant):
            v = node.value
            if v is None or isinstance(v, (bool, int, float, str)):
                return Const(v, sp)
            raise _unsupported(node, self.lines, f"{type(v).__name__} literal")
        if isinstance(node, ast.BinOp):
            op = _BINOPS.get(type(node.op))
            if op is None:
                raise _unsupported(node, self.lines, f"operator {type(node.op).__name__}")
            return BinOp(op, self.expr(node.left), self.expr(node.right), sp)
        if isinstance(node, ast.UnaryOp):
            if isinstance(node.op, ast.USub):
                return Neg(self.expr(node.operand), sp)
            raise _unsupported(node, self.lines, f"unary {type(node.op).__name__}")
        if isinstance(node, ast.Compare):
            if len(node.ops) != 1:
                raise _unsupported(node, self.lines, "chained comparison")
            op = _CMPOPS.get(type(node.ops[0]))
            if op is None:
                raise _unsupported(node, self.lines, f"comparison {type(node.ops[0]).__name__}")
            return Compare(op, self.expr(node.left), self.expr(node.comparators[0]), sp)
        if isinstance(node, ast.Call):
            if node.keywords:
                raise _unsupported(node.keywords[0].value, self.lines, "keyword arguments")
            func = self._callee(node.func)
            return Call(func, tuple(self.expr(a) for a in node.args), sp)
        if isinstance(node, ast.Attribute):
            if node.attr == "T":
                return Transpose(self.expr(node.value), sp)
            raise _unsupported(node, self.lines, f"attribute .{node.attr}")
        if isinstance(node, ast.Subscript):
            if isinstance(node.slice, (ast.Slice, ast.Tuple)):
                raise _unsupported(node.slice, self.lines)
            base = node.value
            if isinstance(base, ast.Attribute) and base.attr == "shape":
                return ShapeOf(self.expr(base.value), self.expr(node.slice), sp)
            return Index(self.expr(base), self.expr(node.slice), sp)
        if isinstance(node, ast.List):
            return ListDisplay(tuple(self.expr(e) for e in node.elts), sp)
        raise _unsupported(node, self.lines)

    def _callee(self, node: ast.AST) -> str:
        parts = []
        cur = node
        while isinstance(cur, ast.Attribute):
            parts.append(cur.attr)
            cur = cur.value
        if not isinstance(cur, ast.Name):
            raise _unsupported(node, self.lines, "computed call target")
        parts.append(cur.id)
        if len(parts) > 1 and cur.id != "np":
            raise _unsupported(node, self.lines, f"method call .{parts[0]}")
        return ".".join(reversed(parts))


def parse_pylite(source: str) -> list[FuncDef]:
    """Parse PyLite text into one :class:`FuncDef` per top-level ``def``."""
    lines = source.splitlines()
    for n, line in enumerate(lines, 1):
        indent = _LEADING_WS.match(line).group()
        if "\t" in indent and line.strip():
            raise BadIndentation("tabs are not allowed in indentation",
                                 SourceSpan(n, indent.index("\t") + 1, 1))
    try:
        tree = ast.parse(source)
    except IndentationError as exc:
        raise BadIndentation(exc.msg, SourceSpan(exc.lineno or 1, exc.offset or 1, 0)) from None
    except SyntaxError as exc:
        raise ParseError(exc.msg, SourceSpan(exc.lineno or 1, exc.offset or 1, 0)) from None
    conv = _Converter(source)
    funcs = [conv.funcdef(node) for node in tree.body]
    if not funcs:
        raise ParseError("expected at least one def", SourceSpan(1, 1, 0))
    names = [f.name for f in funcs]
    for f in funcs:
        if names.count(f.name) > 1:
            raise ParseError(f"function {f.name} is defined more than once", f.span)
    return funcs


# -- lowering ---------------------------------------------------------------

NP_TABLE = {
    "np.dot": "dot",
    "np.transpose": "transpose",
    "np.exp": "exp",
    "np.log": "log",
    "np.linalg.solve": "solve",
    "np.identity": "identity",
    "np.zeros": "zeros",
    "np.diag": "diag",
    "np.sum": "sum",
}
PLAIN_TABLE = {"rand": "random"}
BINDING_HEADS = ("define", "store", "store_row")


def _collapse(stmts: list, span) -> physl.Ast:
    """``block(...)``; a single non-binding statement stands for itself."""
    if len(stmts) == 1:
        only = stmts[0]
        if not (isinstance(only, physl.Apply) and only.head in BINDING_HEADS):
            return only
    return physl.Apply("block", tuple(stmts), span)


class _Lowerer:
    def __init__(self, fn: FuncDef, known_functions: dict[str, int]):
        self.fn = fn
        self.functions = known_functions
        self.bound: set[str] = set(fn.params)

    def run(self) -> physl.Apply:
        fn = self.fn
        self.check_returns(fn.body, terminal=True)
        body = _collapse(self.stmts(fn.body), fn.span)
        params = tuple(physl.Identifier(p, fn.span) for p in fn.params)
        return physl.Apply(
            "define", (physl.Identifier(fn.name, fn.span), *params, body), fn.span
        )

    def check_returns(self, stmts: tuple, terminal: bool) -> None:
        for k, s in enumerate(stmts):
            last = terminal and k == len(stmts) - 1
            if isinstance(s, Return) and not last:
                raise ReturnNotTerminal("return must be the final statement", s.span)
            if isinstance(s, While):
                self.check_returns(s.body, terminal=False)
            elif isinstance(s, If):
                has_return = any(_ends_in_return(b) for _, b in s.arms) or (
                    s.else_body is not None and _ends_in_return(s.else_body))
                arm_terminal = last and has_return
                if arm_terminal and (s.else_body is None or not all(
                        _ends_in_return(b) for b in [*(b for _, b in s.arms), s.else_body])):
                    raise ReturnNotTerminal(
                        "a terminal if must return from every arm, including else", s.span)
                for _, b in s.arms:
                    self.check_returns(b, arm_terminal)
                if s.else_body is not None:
                    self.check_returns(s.else_body, arm_terminal)

    def stmts(self, stmts: tuple) -> list:
        return [self.stmt(s) for s in stmts]

    def ident(self, name: str, span) -> physl.Identifier:
        return physl.Identifier(name, span)

    def bind(self, name: str, value: physl.Ast, span) -> physl.Apply:
        head = "store" if name in self.bound else "define"
        self.bound.add(name)
        return physl.Apply(head, (self.ident(name, span), value), span)

    def stmt(self, s) -> physl.Ast:
        if isinstance(s, Assign):
            value = self.expr(s.value)
            return self.bind(s.name, value, s.span)
        if isinstance(s, AugAssign):
            current = self.read(s.name, s.span)
            value = physl.Apply(s.op, (current, self.expr(s.value)), s.span)
            return physl.Apply("store", (self.ident(s.name, s.span), value), s.span)
        if isinstance(s, RowAssign):
            self.read(s.name, s.span)
            return physl.Apply(
                "store_row",
                (self.ident(s.name, s.span), self.expr(s.index), self.expr(s.value)),
                s.span,
            )
        if isinstance(s, While):
            cond = self.expr(s.cond)
            body = physl.Apply("block", tuple(self.stmts(s.body)), s.span)
            return physl.Apply("while", (cond, body), s.span)
        if isinstance(s, If):
            return self.lower_if(list(s.arms), s.else_body, s.span)
        if isinstance(s, (Return, ExprStmt)):
            return self.expr(s.value)
        raise TypeError(f"unexpected statement {s!r}")

    def lower_if(self, arms: list, else_body, span) -> physl.Apply:
        cond, body = arms[0]
        args = [self.expr(cond), _collapse(self.stmts(body), span)]
        if len(arms) > 1:
            args.append(self.lower_if(arms[1:], else_body, span))
        elif else_body is not None:
            args.append(_collapse(self.stmts(else_body), span))
        return physl.Apply("if", tuple(args), span)

    def read(self, name: str, span) -> physl.Identifier:
        if name not in self.bound:
            raise UnknownIdentifier(f"{name} is read before it is assigned", span)
        return self.ident(name, span)

    def expr(self, e) -> physl.Ast:
        sp = e.span
        if isinstance(e, Name):
            return self.read(e.id, sp)
        if isinstance(e, Const):
            v = e.value
            if v is None:
                return physl.LitNil(sp)
            if isinstance(v, bool):
                return physl.LitBool(v, sp)
            if isinstance(v, int):
                return physl.LitInt(v, sp)
            if isinstance(v, float):
                return physl.LitFloat(v, sp)
            return physl.LitStr(v, sp)
        if isinstance(e, (BinOp, Compare)):
            return physl.Apply(e.op, (self.expr(e.left), self.expr(e.right)), sp)
        if isinstance(e, Neg):
            return physl.Apply("neg", (self.expr(e.operand),), sp)
        if isinstance(e, Transpose):
            return physl.Apply("transpose", (self.expr(e.value),), sp)
        if isinstance(e, ShapeOf):
            return physl.Apply("shape", (self.expr(e.value), self.expr(e.axis)), sp)
        if isinstance(e, Index):
            return physl.Apply("slice_row", (self.expr(e.value), self.expr(e.index)), sp)
        if isinstance(e, ListDisplay):
            return physl.Apply("list", tuple(self.expr(x) for x in e.items), sp)
        if isinstance(e, Call):
            args = tuple(self.expr(a) for a in e.args)
            if e.func in NP_TABLE:
                return physl.Apply(NP_TABLE[e.func], args, sp)
            if e.func in self.functions:
                return physl.Apply(e.func, args, sp)
            if e.func in PLAIN_TABLE:
                return physl.Apply(PLAIN_TABLE[e.func], args, sp)
            raise UnknownCall(f"no lowering for call to {e.func}", sp)
        raise TypeError(f"unexpected expression {e!r}")


def _ends_in_return(body: tuple) -> bool:
    if not body:
        return False
    last = body[-1]
    if isinstance(last, Return):
        return True
    if isinstance(last, If) and last.else_body is not None:
        return all(_ends_in_return(b) for _, b in last.arms) and _ends_in_return(last.else_body)
    return False


def lower(fn: FuncDef, functions: dict[str, int] | None = None) -> physl.Apply:
    """Lower one function to ``define(name, params..., body)``.

    ``functions`` names the other user functions callable from ``fn``
    (defaults to just ``fn`` itself, which allows direct recursion).
    """
    known = dict(functions or {})
    known.setdefault(fn.name, len(fn.params))
    return _Lowerer(fn, known).run()


def lower_module(funcs: list[FuncDef]) -> physl.Apply:
    known = {f.name: len(f.params) for f in funcs}
    defines = tuple(lower(f, known) for f in funcs)
    span = funcs[0].span if funcs else None
    return physl.Apply("block", defines, span)


def transpile(source: str) -> str:
    """PyLite text to canonical PhySL text (one top-level ``block``)."""
    return physl.pretty(lower_module(parse_pylite(source))) + "\n"
