"""Per-node performance counters and their exporters."""
from __future__ import annotations

import csv
import io
import json
import threading
import time
from collections import defaultdict


class CounterSet:
    """Aggregated counters for one static tree node."""

    __slots__ = ("eval_count", "inclusive_ns", "exclusive_ns", "_lock")

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self) -> None:
        self.eval_count = 0
        self.inclusive_ns = 0
        self.exclusive_ns = 0

    def add(self, inclusive_ns: int, exclusive_ns: int, count: int = 1) -> None:
        with self._lock:
            self.eval_count += count
            self.inclusive_ns += inclusive_ns
            self.exclusive_ns += exclusive_ns

    def as_dict(self) -> dict:
        return {
            "count": self.eval_count,
            "inclusive_ns": self.inclusive_ns,
            "exclusive_ns": self.exclusive_ns,
        }


class TraceSink:
    """Collects begin/end events; timestamps are microseconds since creation."""

    def __init__(self):
        self._t0 = time.perf_counter_ns()
        self.events: list[tuple] = []

    def now_us(self) -> float:
        return (time.perf_counter_ns() - self._t0) / 1000.0

    def begin(self, node, worker: int) -> None:
        self.events.append(("B", node.kind, node.id, worker, self.now_us()))

    def end(self, node, worker: int) -> None:
        self.events.append(("E", node.kind, node.id, worker, self.now_us()))


def export_counters(kernels) -> str:
    """CSV of every node, pre-order, one kernel after another."""
    if hasattr(kernels, "root"):
        kernels = [kernels]
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["node_id", "kind", "line", "col", "count", "inclusive_ns", "exclusive_ns"])
    for kernel in kernels:
        for node in kernel.nodes():
            c = node.counters
            line, col = (node.span.line, node.span.col) if node.span else ("", "")
            out.writerow([node.id, node.kind, line, col,
                          c.eval_count, c.inclusive_ns, c.exclusive_ns])
    return buf.getvalue()


def trace_events(sink: TraceSink | None) -> list[dict]:
    if sink is None:
        return []
    return [
        {"name": kind, "ph": ph, "ts": ts, "pid": 1, "tid": worker, "args": {"node": node_id}}
        for ph, kind, node_id, worker, ts in sink.events
    ]


def export_trace(sink: TraceSink | None) -> str:
    """Trace-event JSON array, loadable by chrome://tracing and Perfetto."""
    return json.dumps(trace_events(sink))


def check_trace(events: list[dict]) -> list[str]:
    """Validate B/E pairing. Returns a list of problems (empty when valid).

    Per thread, events must nest: every E closes the most recent open B of
    the same node, with a timestamp no earlier than that B.
    """
    problems = []
    stacks: dict[int, list[dict]] = defaultdict(list)
    for k, ev in enumerate(events):
        stack = stacks[ev["tid"]]
        if ev["ph"] == "B":
            stack.append(ev)
        elif ev["ph"] == "E":
            if not stack:
                problems.append(f"event {k}: E without open B on tid {ev['tid']}")
                continue
            top = stack.pop()
            if top["args"]["node"] != ev["args"]["node"]:
                problems.append(
                    f"event {k}: E for {ev['args']['node']} closes B for {top['args']['node']}")
            if ev["ts"] < top["ts"]:
                problems.append(f"event {k}: E precedes its B")
        else:
            problems.append(f"event {k}: unknown phase {ev['ph']!r}")
    for tid, stack in stacks.items():
        for ev in stack:
            problems.append(f"unclosed B for {ev['args']['node']} on tid {tid}")
    return problems


def begin_counts(events: list[dict]) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for ev in events:
        if ev["ph"] == "B":
            counts[ev["args"]["node"]] += 1
    return dict(counts)
