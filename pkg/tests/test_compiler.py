import json
import random
from pathlib import Path

import pytest

from futarray import algorithms as alg
from futarray import physl, values
from futarray.compiler import (KernelCache, compile_program, dump_program, dump_tree,
                               fold_constants, tree_signature)
from futarray.errors import ArityError, DuplicateDefinition, SideEffectPosition, UnknownIdentifier
from futarray.executor import EvalContext, eval_sequential, run_program

GOLDEN = Path(__file__).parent / "golden"


def compile_text(src, **kw):
    return compile_program(physl.parse(src), **kw)


def shape(node):
    return (node.kind, [shape(c) for c in node.children])


def test_expression_form_is_main_kernel():
    prog = compile_text("add(1, 2)")
    k = prog.kernel("__main")
    assert k.param_count == 0
    assert shape(k.root) == ("add", [("const", []), ("const", [])])
    assert [c.value for c in k.root.children] == [1, 2]


def test_user_call_node():
    prog = compile_text("block(define(f, x, block(x)), define(main, f(3)))")
    call = prog.kernel("main").root
    assert call.kind == "call" and call.callee == "f" and len(call.children) == 1
    f = prog.kernel("f")
    assert f.params == ("x",) and f.frame_size == 1


def test_mixed_program_hoists_functions():
    prog = compile_text("block(define(f, x, mul(x, 2)), define(a, 4), f(a))")
    assert set(prog.kernels) == {"f", "__main"}
    assert run_program(prog, "__main") == 8


def test_slots_and_frame_size():
    prog = compile_text("block(define(k, a, b, block(define(c, add(a, b)), store(a, c), c)))")
    k = prog.kernel("k")
    assert k.frame_size == 3
    assert k.slot_names == ("a", "b", "c")
    define_c = k.root.children[0]
    assert define_c.slot == 2
    for node in k.nodes():
        if node.slot is not None:
            assert node.slot < k.frame_size


def test_every_ast_node_maps_to_one_exec_node():
    text = alg.load_golden("als")
    ast_ = physl.parse(text)
    prog = compile_program(ast_)
    # Kernel headers (define, name, params) and binding targets are not tree nodes.
    total = sum(1 for _ in physl.walk(ast_)) - 1
    headers = sum(len(d.args) for d in ast_.args)
    bindings = [n for n in physl.walk(ast_) if isinstance(n, physl.Apply)
                and n.head in ("define", "store", "store_row") and n not in ast_.args]
    assert prog.node_count() == total - headers - len(bindings)


@pytest.mark.parametrize("src,err", [
    ("add(store(a, 1), 2)", SideEffectPosition),
    ("block(define(a, 1), add(define(b, 2), a))", SideEffectPosition),
    ("if(define(a, true), 1)", SideEffectPosition),
    ("add(x, 1)", UnknownIdentifier),
    ("block(store(a, 1))", UnknownIdentifier),
    ("nosuch(1)", UnknownIdentifier),
    ("dot(1)", ArityError),
    ("if(true)", ArityError),
    ("while(true, 1, 2)", ArityError),
    ("block()", ArityError),
    ("block(define(f, x, x), define(main, f(1, 2)))", ArityError),
    ("block(define(f, x, x), define(f, y, y))", DuplicateDefinition),
    ("block(define(add, x, x))", DuplicateDefinition),
])
def test_compile_errors(src, err):
    with pytest.raises(err) as info:
        compile_text(src)
    assert info.value.span is not None


def test_error_span_points_at_offender():
    with pytest.raises(SideEffectPosition) as info:
        compile_text("block(define(a, 1),\n  add(store(a, 2), 1))")
    assert (info.value.span.line, info.value.span.col) == (2, 7)


def test_compilation_is_deterministic():
    a = compile_text(alg.load_golden("als"))
    b = compile_text(alg.load_golden("als"))
    for name in a.kernels:
        assert tree_signature(a.kernels[name].root) == tree_signature(b.kernels[name].root)
        assert a.kernels[name].slot_names == b.kernels[name].slot_names


def test_kernel_cache():
    cache = KernelCache()
    src = alg.load_golden("lra")
    first = compile_text(src, cache=cache).kernel("lra")
    second = compile_text(src, cache=cache).kernel("lra")
    assert first is second and first.id == second.id
    assert cache.hits == 1 and cache.misses == 1
    other = compile_text(src.replace("alpha, grad", "grad, alpha"), cache=cache).kernel("lra")
    assert other.name == first.name and other.id != first.id


def test_fold_examples():
    k = fold_constants(compile_text("add(1, mul(2, 3))").kernel("__main"))
    assert k.root.kind == "const" and k.root.value == 7
    k = fold_constants(compile_text("block(define(x, 1), add(x, sub(2, 2)))").kernel("__main"))
    add = k.root.children[1]
    assert shape(add) == ("add", [("var", []), ("const", [])])
    assert add.children[1].value == 0


def test_fold_ieee_and_errors():
    k = fold_constants(compile_text("div(1, 0)").kernel("__main"))
    assert k.root.kind == "const" and k.root.value == float("inf")
    k = fold_constants(compile_text("add(1, true)").kernel("__main"))
    assert k.root.kind == "add"


def test_fold_leaves_control_and_calls():
    src = "block(define(f, x, x), define(main, block(define(a, f(add(1, 2))), if(lt(1, 2), a, 0))))"
    k = fold_constants(compile_text(src).kernel("main"))
    call = k.root.children[0].children[0]
    assert call.kind == "call" and call.children[0].kind == "const"
    assert k.root.children[1].kind == "if"
    assert k.root.children[1].children[0].kind == "const"


def _random_arith(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        choice = rng.random()
        if choice < 0.4:
            return str(rng.randint(-5, 5))
        if choice < 0.8:
            return repr(rng.choice([0.5, -1.25, 3.0, 1e-3, 0.0]))
        return "x"
    op = rng.choice(["add", "sub", "mul", "div", "lt", "neg"])
    if op == "neg":
        return f"neg({_random_arith(rng, depth - 1)})"
    if op == "lt":
        return f"if(lt({_random_arith(rng, depth - 1)}, {_random_arith(rng, depth - 1)}), 1.5, 2)"
    return f"{op}({_random_arith(rng, depth - 1)}, {_random_arith(rng, depth - 1)})"


@pytest.mark.parametrize("seed", range(40))
def test_fold_preserves_semantics_and_is_idempotent(seed):
    rng = random.Random(seed)
    src = f"block(define(k, x, {_random_arith(rng, 5)}))"
    k = compile_text(src).kernel("k")
    folded = fold_constants(k)
    assert tree_signature(fold_constants(folded).root) == tree_signature(folded.root)
    for x in (2, -0.75):
        ctx = EvalContext(kernels={"k": k})
        want = eval_sequential(k, [x], ctx)
        got = eval_sequential(folded, [x], EvalContext(kernels={"k": folded}))
        assert values.bitwise_equal(got, want) or (want != want and got != got)


def test_fold_flag_through_compile():
    prog = compile_text("add(1, mul(2, 3))", fold=True)
    assert prog.kernel("__main").folded and prog.kernel("__main").root.kind == "const"


def test_dump_single_const():
    dot = dump_tree(compile_text("1").kernel("__main"), "dot")
    assert dot.count("[label=") == 1 and "->" not in dot


def test_dump_json_schema():
    doc = json.loads(dump_tree(compile_text("add(1, 2)").kernel("__main"), "json"))
    assert doc["kind"] == "add" and doc["counters"] is None
    assert [c["id"] for c in doc["children"]] == ["__main:1", "__main:2"]
    assert doc["span"] == {"line": 1, "col": 1}
    assert set(doc) == {"id", "kind", "span", "counters", "children"}


def _count_json(node):
    return 1 + sum(_count_json(c) for c in node["children"])


def test_dump_node_count_matches_tree():
    k = compile_text(alg.load_golden("factorial")).kernel("fact")
    assert _count_json(json.loads(dump_tree(k, "json"))) == k.node_count() == 11
    dot = dump_tree(k, "dot")
    assert dot.count("[label=") == k.node_count()
    assert dot.count("->") == k.node_count() - 1


def test_dump_goldens():
    k = compile_text(alg.load_golden("factorial")).kernel("fact")
    assert dump_tree(k, "json") == (GOLDEN / "factorial.tree.json").read_text()
    assert dump_tree(k, "dot") == (GOLDEN / "factorial.tree.dot").read_text()


def test_dump_with_counters():
    prog = compile_text(alg.load_golden("factorial"))
    run_program(prog, "fact", [3], EvalContext(mode="sequential", counters=True))
    k = prog.kernel("fact")
    doc = json.loads(dump_tree(k, "json", counters=True))
    assert doc["counters"]["count"] == 4
    dot = dump_tree(k, "dot", counters=True)
    assert '"fact:0" [label="if\\ncount=4\\nincl=' in dot
    assert "ms excl=" in dot


def test_dump_program_covers_all_kernels():
    prog = compile_text(alg.load_golden("als"))
    doc = json.loads(dump_program(prog, "json"))
    assert [d["kernel"] for d in doc] == ["update_rows", "als"]
    dot = dump_program(prog, "dot")
    assert dot.count("subgraph") == 2
    with pytest.raises(ValueError):
        dump_program(prog, "svg")
