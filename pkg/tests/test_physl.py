import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from futarray import physl
from futarray.errors import LexError, ParseError
from futarray.physl import Apply, Identifier, LitBool, LitFloat, LitInt, LitNil, LitStr

names = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,6}", fullmatch=True).filter(
    lambda s: s not in physl.KEYWORDS)

leaves = st.one_of(
    names.map(Identifier),
    st.integers(-(1 << 63), (1 << 63) - 1).map(LitInt),
    st.floats(allow_nan=False, allow_infinity=False).map(LitFloat),
    st.text(max_size=8).map(LitStr),
    st.booleans().map(LitBool),
    st.just(LitNil()),
)

asts = st.recursive(
    leaves,
    lambda kids: st.builds(Apply, names, st.lists(kids, max_size=4).map(tuple)),
    max_leaves=25,
)


def kinds(source):
    return [t.kind for t in physl.lex(source)]


def test_lex_define():
    assert kinds("define(a, 1)") == ["ident", "lparen", "ident", "comma", "int", "rparen", "eof"]


def test_lex_comment_only():
    assert kinds("// c") == ["eof"]


def test_lex_string_escape():
    tok = physl.lex(r'"a\"b"')[0]
    assert tok.kind == "str" and tok.value == 'a"b' and len(tok.value) == 3


def test_lex_numbers():
    toks = physl.lex("1 1.0 .5 2e3 7E-1")
    assert [t.kind for t in toks[:-1]] == ["int", "float", "float", "float", "float"]
    assert toks[3].value == 2000.0


@pytest.mark.parametrize("src", ["a $ b", '"open', '"bad \\q"'])
def test_lex_errors(src):
    with pytest.raises(LexError) as info:
        physl.lex(src)
    assert info.value.span.line == 1


def test_parse_examples():
    assert physl.parse("42") == LitInt(42)
    assert physl.parse("dot(A, transpose(A))") == Apply(
        "dot", (Identifier("A"), Apply("transpose", (Identifier("A"),))))
    assert physl.parse("-3") == LitInt(-3)
    assert physl.parse("f()") == Apply("f", ())


@pytest.mark.parametrize("src", ["f(1,)", "f(1", "", "f(1) g", "(1)", "-x", "1 2"])
def test_parse_errors(src):
    with pytest.raises(ParseError) as info:
        physl.parse(src)
    span = info.value.span
    lines = src.split("\n")
    assert 1 <= span.line <= len(lines)
    assert 1 <= span.col <= len(lines[span.line - 1]) + 1


def test_spans_are_one_based_and_nested():
    root = physl.parse("block(\n  add(x, 1))")
    assert (root.span.line, root.span.col) == (1, 1)
    add = root.args[0]
    assert (add.span.line, add.span.col) == (2, 3)
    assert (add.args[1].span.line, add.args[1].span.col) == (2, 10)


def test_integer_literal_range():
    assert physl.parse("-9223372036854775808") == LitInt(-(1 << 63))
    with pytest.raises(ParseError):
        physl.parse("9223372036854775808")


def test_pretty_examples():
    assert physl.pretty(Apply("block", (LitInt(1), LitInt(2)))) == "block(1, 2)"
    assert physl.pretty(LitFloat(0.5)) == "0.5"
    assert physl.pretty(LitFloat(1e100)) == "1e+100"
    assert physl.pretty(LitFloat(2.0)) == "2.0"
    assert physl.pretty(LitStr('a"\n')) == r'"a\"\n"'


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(asts)
def test_round_trip(tree):
    assert physl.parse(physl.pretty(tree)) == tree


@settings(max_examples=200, deadline=None)
@given(asts)
def test_pretty_idempotent(tree):
    once = physl.pretty(physl.parse(physl.pretty(tree)))
    assert physl.pretty(physl.parse(once)) == once


def test_float_literal_survives_as_float():
    assert isinstance(physl.parse(physl.pretty(LitFloat(3.0))), LitFloat)
    assert physl.parse(physl.pretty(LitFloat(-0.0))).value == 0.0
