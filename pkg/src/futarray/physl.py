"""PhySL: the textual intermediate form between PyLite and the execution tree.

Grammar::

    program := expr
    expr    := apply | identifier | literal
    apply   := identifier '(' [expr (',' expr)*] ')'

Literals are integers, floats (a ``.`` or exponent makes a float), double
quoted strings with ``\\" \\\\ \\n \\t`` escapes, and ``true false nil``. A
``-`` directly before a number literal negates it. ``//`` starts a comment.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import LexError, ParseError, SourceSpan

KEYWORDS = {"true", "false", "nil"}


# -- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Identifier:
    name: str
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LitInt:
    value: int
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LitFloat:
    value: float
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("float literals must be finite")


@dataclass(frozen=True)
class LitStr:
    value: str
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LitBool:
    value: bool
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LitNil:
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Apply:
    head: str
    args: tuple = ()
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


Ast = Union[Identifier, LitInt, LitFloat, LitStr, LitBool, LitNil, Apply]
LITERALS = (LitInt, LitFloat, LitStr, LitBool, LitNil)


def walk(node: Ast) -> Iterator[Ast]:
    """Pre-order traversal."""
    yield node
    if isinstance(node, Apply):
        for arg in node.args:
            yield from walk(arg)


# -- lexer ------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, float, str, true, false, nil, lparen, rparen, comma, minus, eof
    text: str
    value: object
    span: SourceSpan
    offset: int


_NUMBER = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = {"(": "lparen", ")": "rparen", ",": "comma", "-": "minus"}
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


def _byte_len(text: str) -> int:
    return len(text.encode("utf-8"))


def lex(source: str) -> list[Token]:
    """Tokenize PhySL text. The returned list always ends with an ``eof`` token."""
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(source)
    while pos < n:
        ch = source[pos]
        col = pos - line_start + 1
        if ch == "\n":
            pos += 1
            line, line_start = line + 1, pos
            continue
        if ch in " \t\r":
            pos += 1
            continue
        if source.startswith("//", pos):
            end = source.find("\n", pos)
            pos = n if end < 0 else end
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, None, SourceSpan(line, col, 1), pos))
            pos += 1
            continue
        if ch == '"':
            start = pos
            pos += 1
            chars = []
            while True:
                if pos >= n or source[pos] == "\n":
                    raise LexError("unterminated string", SourceSpan(line, col, 1))
                c = source[pos]
                if c == '"':
                    pos += 1
                    break
                if c == "\\":
                    esc = source[pos + 1] if pos + 1 < n else ""
                    if esc not in _ESCAPES:
                        raise LexError(
                            f"unknown escape \\{esc}",
                            SourceSpan(line, pos - line_start + 1, 2),
                        )
                    chars.append(_ESCAPES[esc])
                    pos += 2
                    continue
                chars.append(c)
                pos += 1
            text = source[start:pos]
            tokens.append(Token("str", text, "".join(chars),
                                SourceSpan(line, col, _byte_len(text)), start))
            continue
        m = _NUMBER.match(source, pos)
        if m:
            text = m.group()
            if m.group(2) or "." in text:
                kind, value = "float", float(text)
            else:
                kind, value = "int", int(text)
            tokens.append(Token(kind, text, value, SourceSpan(line, col, len(text)), pos))
            pos = m.end()
            continue
        m = _IDENT.match(source, pos)
        if m:
            text = m.group()
            kind = text if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, text, SourceSpan(line, col, len(text)), pos))
            pos = m.end()
            continue
        raise LexError(f"unexpected character {ch!r}", SourceSpan(line, col, _byte_len(ch)))
    col = pos - line_start + 1
    tokens.append(Token("eof", "", None, SourceSpan(line, col, 0), pos))
    return tokens


# -- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = lex(source)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {what}, found {_describe(tok)}", tok.span)
        return self.advance()

    def span_from(self, first: Token, last: Token) -> SourceSpan:
        end = last.offset + len(last.text)
        nbytes = _byte_len(self.source[first.offset:end])
        return SourceSpan(first.span.line, first.span.col, nbytes)

    def expr(self) -> Ast:
        tok = self.advance()
        if tok.kind == "ident":
            if self.peek().kind != "lparen":
                return Identifier(tok.value, tok.span)
            self.advance()
            args = []
            if self.peek().kind != "rparen":
                args.append(self.expr())
                while self.peek().kind == "comma":
                    self.advance()
                    args.append(self.expr())
            close = self.expect("rparen", "',' or ')'")
            return Apply(tok.value, tuple(args), self.span_from(tok, close))
        if tok.kind == "minus":
            num = self.peek()
            if num.kind not in ("int", "float"):
                raise ParseError(f"expected a number after '-', found {_describe(num)}", num.span)
            self.advance()
            return self._number(num, tok, negate=True)
        if tok.kind in ("int", "float"):
            return self._number(tok, tok, negate=False)
        if tok.kind == "str":
            return LitStr(tok.value, tok.span)
        if tok.kind in ("true", "false"):
            return LitBool(tok.kind == "true", tok.span)
        if tok.kind == "nil":
            return LitNil(tok.span)
        raise ParseError(f"expected an expression, found {_describe(tok)}", tok.span)

    def _number(self, tok: Token, first: Token, negate: bool) -> Ast:
        span = self.span_from(first, tok)
        value = -tok.value if negate else tok.value
        if tok.kind == "float":
            if not math.isfinite(value):
                raise ParseError(f"float literal {tok.text} out of range", span)
            return LitFloat(value, span)
        if not -(1 << 63) <= value < (1 << 63):
            raise ParseError(f"integer literal {tok.text} does not fit in 64 bits", span)
        return LitInt(value, span)


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


def parse(source: str) -> Ast:
    """Parse exactly one PhySL expression; trailing input is an error."""
    p = _Parser(source)
    root = p.expr()
    tail = p.peek()
    if tail.kind != "eof":
        raise ParseError(f"unexpected {_describe(tail)} after expression", tail.span)
    return root


# -- pretty printer ---------------------------------------------------------

def _escape(s: str) -> str:
    return (s.replace("\\", "\\\\").replace('"', '\\"')
             .replace("\n", "\\n").replace("\t", "\\t"))


def pretty(node: Ast) -> str:
    """Canonical single-line rendering; ``parse(pretty(t)) == t``."""
    parts: list[str] = []
    _pretty_into(node, parts)
    return "".join(parts)


def _pretty_into(node: Ast, out: list[str]) -> None:
    if isinstance(node, Apply):
        out.append(node.head)
        out.append("(")
        for k, arg in enumerate(node.args):
            if k:
                out.append(", ")
            _pretty_into(arg, out)
        out.append(")")
    elif isinstance(node, Identifier):
        out.append(node.name)
    elif isinstance(node, LitBool):
        out.append("true" if node.value else "false")
    elif isinstance(node, LitInt):
        out.append(str(node.value))
    elif isinstance(node, LitFloat):
        out.append(repr(node.value))
    elif isinstance(node, LitStr):
        out.append('"' + _escape(node.value) + '"')
    elif isinstance(node, LitNil):
        out.append("nil")
    else:
        raise TypeError(f"not a PhySL node: {node!r}")
