"""Compile PhySL into execution trees.

A program is either a ``block`` of top-level ``define`` forms (each becomes a
:class:`CompiledKernel`) or a single expression, compiled as the
zero-parameter kernel ``__main``. Inside a kernel, parameters take slots
``0..n-1`` and every locally defined name gets the next free slot.

Binding forms (``define``, ``store``, ``store_row``) may only appear in
statement position: the kernel root, or directly under a ``block``, a
``while`` body or an ``if`` branch that is itself in statement position. This
is what lets the executor evaluate the arguments of every pure node
concurrently without races on frame slots.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from typing import Iterator

from . import physl, values
from .errors import (
    ArityError,
    CompileError,
    DuplicateDefinition,
    FutError,
    SideEffectPosition,
    UnknownIdentifier,
)
from .perf import CounterSet
from .primitives import ALL_KINDS, BINDING, PRIMITIVES

MAIN = "__main"


class ExecNode:
    """One primitive in an execution tree.

    ``slot`` is set for var/define/store/store_row, ``value`` for const,
    ``callee`` for call.
    """

    __slots__ = ("id", "kind", "prim", "children", "span", "counters", "slot", "value", "callee")

    def __init__(self, kind: str, children=(), span=None, slot=None, value=None, callee=None):
        self.id = ""
        self.kind = kind
        self.prim = ALL_KINDS[kind]
        self.children = list(children)
        self.span = span
        self.counters = CounterSet()
        self.slot = slot
        self.value = value
        self.callee = callee

    def walk(self) -> Iterator[ExecNode]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def label(self) -> str:
        if self.kind == "const":
            return f"const {values.format_datum(self.value)}"
        if self.kind == "call":
            return f"call {self.callee}"
        if self.slot is not None:
            return f"{self.kind} ${self.slot}"
        return self.kind

    def __repr__(self) -> str:
        return f"ExecNode({self.id} {self.label()})"


@dataclass(eq=False)
class CompiledKernel:
    name: str
    params: tuple[str, ...]
    frame_size: int
    root: ExecNode
    source_hash: str
    slot_names: tuple[str, ...] = ()
    folded: bool = False

    @property
    def param_count(self) -> int:
        return len(self.params)

    @property
    def id(self) -> str:
        suffix = "+fold" if self.folded else ""
        return f"{self.name}@{self.source_hash[:12]}{suffix}"

    def nodes(self) -> list[ExecNode]:
        return list(self.root.walk())

    def node_count(self) -> int:
        return sum(1 for _ in self.root.walk())

    def reset_counters(self) -> None:
        for node in self.root.walk():
            node.counters.reset()


@dataclass
class Program:
    kernels: dict[str, CompiledKernel] = field(default_factory=dict)

    def kernel(self, name: str) -> CompiledKernel:
        try:
            return self.kernels[name]
        except KeyError:
            raise UnknownIdentifier(f"no kernel named {name}") from None

    def reset_counters(self) -> None:
        for k in self.kernels.values():
            k.reset_counters()

    def node_count(self) -> int:
        return sum(k.node_count() for k in self.kernels.values())


class KernelCache:
    """Maps (name, source hash, folded) to a compiled kernel."""

    def __init__(self):
        self._lock = threading.Lock()
        self._kernels: dict[tuple, CompiledKernel] = {}
        self.hits = 0
        self.misses = 0

    def get_or_build(self, key: tuple, build) -> CompiledKernel:
        with self._lock:
            found = self._kernels.get(key)
            if found is not None:
                self.hits += 1
                return found
            self.misses += 1
        kernel = build()
        with self._lock:
            return self._kernels.setdefault(key, kernel)

    def __len__(self) -> int:
        return len(self._kernels)


# -- front half: splitting the program into kernels -------------------------

def _is_define(node) -> bool:
    return isinstance(node, physl.Apply) and node.head == "define"


def _kernel_parts(node: physl.Apply) -> tuple[str, tuple[str, ...], physl.Ast]:
    if len(node.args) < 2:
        raise ArityError(f"define expects at least 2 arguments, got {len(node.args)}", node.span)
    names = node.args[:-1]
    for n in names:
        if not isinstance(n, physl.Identifier):
            raise CompileError("define names and parameters must be identifiers", n.span or node.span)
    name = names[0].name
    params = tuple(n.name for n in names[1:])
    if len(set(params)) != len(params):
        raise DuplicateDefinition(f"duplicate parameter in {name}", node.span)
    return name, params, node.args[-1]


def _split_program(root: physl.Ast) -> list[tuple[str, tuple, physl.Ast, physl.Ast]]:
    """Return (name, params, body, define_node) for each kernel."""
    if _is_define(root):
        defs, rest = [root], []
    elif isinstance(root, physl.Apply) and root.head == "block" and root.args:
        if all(_is_define(a) for a in root.args):
            defs, rest = list(root.args), []
        else:
            defs = [a for a in root.args if _is_define(a) and len(a.args) > 2]
            rest = [a for a in root.args if not (_is_define(a) and len(a.args) > 2)]
    else:
        defs, rest = [], [root]
    out = []
    for d in defs:
        name, params, body = _kernel_parts(d)
        out.append((name, params, body, d))
    if rest:
        body = rest[0] if len(rest) == 1 else physl.Apply("block", tuple(rest), root.span)
        out.append((MAIN, (), body, body))
    seen = set()
    for name, _, _, d in out:
        if name in seen:
            raise DuplicateDefinition(f"kernel {name} is defined more than once", d.span)
        if name in ALL_KINDS:
            raise DuplicateDefinition(f"kernel name {name} shadows a primitive", d.span)
        seen.add(name)
    return out


def _source_hash(define_node: physl.Ast) -> str:
    spans = [(n.span.line, n.span.col, n.span.byte_len) if n.span else None
             for n in physl.walk(define_node)]
    text = physl.pretty(define_node) + "\n" + json.dumps(spans)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- back half: one kernel body into a tree ---------------------------------

class _KernelBuilder:
    def __init__(self, params: tuple[str, ...], signatures: dict[str, int]):
        self.slots = {p: k for k, p in enumerate(params)}
        self.signatures = signatures

    def slot_names(self) -> tuple[str, ...]:
        names = [""] * len(self.slots)
        for n, k in self.slots.items():
            names[k] = n
        return tuple(names)

    def build(self, node: physl.Ast, stmt: bool) -> ExecNode:
        if isinstance(node, physl.Identifier):
            if node.name in self.slots:
                return ExecNode("var", span=node.span, slot=self.slots[node.name])
            if node.name in self.signatures:
                raise UnknownIdentifier(
                    f"kernel {node.name} cannot be used as a value", node.span)
            raise UnknownIdentifier(f"unknown identifier {node.name}", node.span)
        if isinstance(node, physl.LitNil):
            return ExecNode("const", span=node.span, value=None)
        if isinstance(node, physl.LITERALS):
            return ExecNode("const", span=node.span, value=node.value)
        return self.apply(node, stmt)

    def _arity(self, node: physl.Apply, expected: str, ok: bool) -> None:
        if not ok:
            raise ArityError(
                f"{node.head} expects {expected} arguments, got {len(node.args)}", node.span)

    def _target(self, node: physl.Apply, defining: bool) -> int:
        target = node.args[0]
        if not isinstance(target, physl.Identifier):
            raise CompileError(f"{node.head} target must be a name", target.span or node.span)
        if defining:
            return self.slots.setdefault(target.name, len(self.slots))
        if target.name not in self.slots:
            raise UnknownIdentifier(
                f"{node.head} to undefined variable {target.name}", target.span or node.span)
        return self.slots[target.name]

    def apply(self, node: physl.Apply, stmt: bool) -> ExecNode:
        head, args, span = node.head, node.args, node.span
        if head in BINDING and not stmt:
            raise SideEffectPosition(f"{head} is only allowed in statement position", span)
        if head in PRIMITIVES:
            kind = PRIMITIVES[head]
            self._arity(node, kind.arity_text(), kind.accepts(len(args)))
        if head == "block":
            return ExecNode("block", [self.build(a, stmt) for a in args], span)
        if head == "if":
            kids = [self.build(args[0], False)] + [self.build(a, stmt) for a in args[1:]]
            return ExecNode("if", kids, span)
        if head == "while":
            return ExecNode("while", [self.build(args[0], False), self.build(args[1], stmt)], span)
        if head == "define":
            value = self.build(args[1], False)
            return ExecNode("define", [value], span, slot=self._target(node, True))
        if head == "store":
            slot = self._target(node, False)
            return ExecNode("store", [self.build(args[1], False)], span, slot=slot)
        if head == "store_row":
            slot = self._target(node, False)
            kids = [self.build(a, False) for a in args[1:]]
            return ExecNode("store_row", kids, span, slot=slot)
        if head in PRIMITIVES:
            return ExecNode(head, [self.build(a, False) for a in args], span)
        if head in self.signatures:
            want = self.signatures[head]
            self._arity(node, str(want), len(args) == want)
            return ExecNode("call", [self.build(a, False) for a in args], span, callee=head)
        raise UnknownIdentifier(f"unknown function {head}", span)


def _number(root: ExecNode, kernel_name: str) -> None:
    for k, node in enumerate(root.walk()):
        node.id = f"{kernel_name}:{k}"


def compile_program(root: physl.Ast, cache: KernelCache | None = None,
                    fold: bool = False) -> Program:
    """Compile a PhySL program; kernels are shared through ``cache`` if given."""
    parts = _split_program(root)
    signatures = {name: len(params) for name, params, _, _ in parts}
    program = Program()
    for name, params, body, define_node in parts:
        digest = _source_hash(define_node)

        def build(name=name, params=params, body=body, digest=digest):
            builder = _KernelBuilder(params, signatures)
            tree = builder.build(body, stmt=True)
            _number(tree, name)
            kernel = CompiledKernel(name, params, len(builder.slots), tree, digest,
                                    builder.slot_names())
            return fold_constants(kernel) if fold else kernel

        key = (name, digest, fold, tuple(sorted(signatures.items())))
        kernel = cache.get_or_build(key, build) if cache is not None else build()
        program.kernels[name] = kernel
    return program


# -- constant folding -------------------------------------------------------

def _fold(node: ExecNode) -> ExecNode:
    kids = [_fold(c) for c in node.children]
    if node.prim.foldable and all(c.kind == "const" for c in kids):
        try:
            value = node.prim.apply(*(c.value for c in kids))
        except FutError:
            pass
        else:
            return ExecNode("const", span=node.span, value=value)
    return ExecNode(node.kind, kids, node.span, node.slot, node.value, node.callee)


def fold_constants(kernel: CompiledKernel) -> CompiledKernel:
    """Replace arithmetic/comparison subtrees with constant leaves by their value."""
    root = _fold(kernel.root)
    _number(root, kernel.name)
    return CompiledKernel(kernel.name, kernel.params, kernel.frame_size, root,
                          kernel.source_hash, kernel.slot_names, folded=True)


def tree_signature(node: ExecNode) -> tuple:
    """Structural identity of a tree (ids, spans and counters excluded)."""
    if node.kind == "const":
        v = node.value
        payload = (values.kind_of(v), values.format_datum(v))
    else:
        payload = (node.slot, node.callee)
    return (node.kind, payload, tuple(tree_signature(c) for c in node.children))


# -- dumps ------------------------------------------------------------------

def _json_node(node: ExecNode, counters: bool) -> dict:
    return {
        "id": node.id,
        "kind": node.kind,
        "span": {"line": node.span.line, "col": node.span.col} if node.span else None,
        "counters": node.counters.as_dict() if counters else None,
        "children": [_json_node(c, counters) for c in node.children],
    }


def _dot_label(node: ExecNode, counters: bool) -> str:
    text = node.label().replace("\\", "\\\\").replace('"', '\\"')
    if counters:
        c = node.counters
        text += (f"\\ncount={c.eval_count}"
                 f"\\nincl={c.inclusive_ns / 1e6:.3f}ms excl={c.exclusive_ns / 1e6:.3f}ms")
    return text


def _dot_body(kernel: CompiledKernel, counters: bool, indent: str) -> list[str]:
    lines = []
    for node in kernel.root.walk():
        lines.append(f'{indent}"{node.id}" [label="{_dot_label(node, counters)}"];')
    for node in kernel.root.walk():
        for child in node.children:
            lines.append(f'{indent}"{node.id}" -> "{child.id}";')
    return lines


def dump_tree(kernel: CompiledKernel, fmt: str = "json", counters: bool = False) -> str:
    """Render one kernel's tree as nested JSON or a DOT digraph."""
    if fmt == "json":
        return json.dumps(_json_node(kernel.root, counters), indent=2) + "\n"
    if fmt == "dot":
        lines = [f'digraph "{kernel.name}" {{', "  node [shape=box];"]
        lines += _dot_body(kernel, counters, "  ")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown tree format {fmt!r}")


def dump_program(program: Program, fmt: str = "json", counters: bool = False) -> str:
    if fmt == "json":
        doc = [{"kernel": k.name, "root": _json_node(k.root, counters)}
               for k in program.kernels.values()]
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "dot":
        lines = ['digraph "program" {', "  node [shape=box];"]
        for k, kernel in enumerate(program.kernels.values()):
            lines.append(f'  subgraph "cluster_{k}" {{')
            lines.append(f'    label="{kernel.name}";')
            lines += _dot_body(kernel, counters, "    ")
            lines.append("  }")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown tree format {fmt!r}")
