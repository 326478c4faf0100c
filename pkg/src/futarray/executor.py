"""Futurized evaluation of execution trees.

Dataflow mode turns every node evaluation into a task on a work-stealing
worker pool. Each evaluation returns a :class:`FutureHandle`; a node never
blocks a worker waiting for a child. Instead it attaches a continuation that
runs its own apply step once every child handle is resolved. Constants and
variable reads are resolved inline without spawning.

Ordering rules:

* pure kinds (arithmetic, linear algebra, calls, and the value side of
  define/store/store_row) launch all children at once;
* ``block`` runs its children one after another, each fully resolved before
  the next starts; ``if`` and ``while`` alternate condition and body.

Sequential mode is a direct recursive walk with no tasks. It defines the
reference semantics; dataflow results are bitwise equal to it.
"""
from __future__ import annotations

import itertools
import logging
import os
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import physl
from .compiler import CompiledKernel, KernelCache, Program, compile_program
from .errors import ArityError, DepthLimit, FutError, InternalError, UnboundVariable
from .perf import TraceSink
from .values import Datum, as_condition, replace_row

log = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 10_000
_now = time.perf_counter_ns
_local = threading.local()
_UNSET = object()


def default_workers() -> int:
    env = os.environ.get("FUT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def current_worker_id() -> int:
    """1-based worker index on pool threads, 0 on any other thread."""
    return getattr(_local, "worker_id", 0)


# -- futures ----------------------------------------------------------------

def _run_callbacks(callbacks, handle) -> None:
    # Trampoline: continuations triggered while another continuation is
    # running on this thread are queued, which keeps the stack flat however
    # long the resolution chain gets.
    queue = getattr(_local, "pending", None)
    if queue is not None:
        queue.extend((cb, handle) for cb in callbacks)
        return
    queue = _local.pending = deque((cb, handle) for cb in callbacks)
    try:
        while queue:
            cb, h = queue.popleft()
            try:
                cb(h)
            except Exception:  # continuations guard themselves; this is a backstop
                log.exception("continuation raised")
    finally:
        _local.pending = None


class FutureHandle:
    """Single-assignment handle to a Datum that may not be computed yet."""

    __slots__ = ("_lock", "_done", "_value", "_error", "_callbacks", "_event")

    def __init__(self):
        self._lock = threading.Lock()
        self._done = False
        self._value = None
        self._error = None
        self._callbacks = []
        self._event = None

    @classmethod
    def ready(cls, value: Datum) -> FutureHandle:
        h = cls()
        h._done = True
        h._value = value
        h._callbacks = None
        return h

    @classmethod
    def failed_with(cls, error: BaseException) -> FutureHandle:
        h = cls.ready(None)
        h._error = error
        return h

    def done(self) -> bool:
        return self._done

    @property
    def failed(self) -> bool:
        return self._done and self._error is not None

    @property
    def value(self) -> Datum:
        return self._value

    @property
    def error(self) -> BaseException | None:
        return self._error

    def _settle(self, value, error) -> None:
        with self._lock:
            if self._done:
                raise RuntimeError("future resolved twice")
            self._value, self._error = value, error
            self._done = True
            callbacks, self._callbacks = self._callbacks, None
            event = self._event
        if event is not None:
            event.set()
        if callbacks:
            _run_callbacks(callbacks, self)

    def resolve(self, value: Datum) -> None:
        self._settle(value, None)

    def fail(self, error: BaseException) -> None:
        self._settle(None, error)

    def add_done_callback(self, fn: Callable[[FutureHandle], None]) -> None:
        with self._lock:
            if not self._done:
                self._callbacks.append(fn)
                return
        _run_callbacks([fn], self)

    def result(self, timeout: float | None = None) -> Datum:
        """Block the calling (non-worker) thread until resolved."""
        if not self._done:
            with self._lock:
                if not self._done and self._event is None:
                    self._event = threading.Event()
                event = self._event
            if event is not None and not event.wait(timeout):
                raise TimeoutError("evaluation did not finish in time")
        if self._error is not None:
            raise self._error
        return self._value


# -- scheduler --------------------------------------------------------------

class Scheduler:
    """Fixed pool of worker threads with per-worker deques and work stealing.

    A worker pops its own deque LIFO, then the shared injection queue, then
    steals FIFO from the other workers. Idle workers sleep on a condition;
    ``spawn`` wakes one only when somebody is idle.
    """

    def __init__(self, workers: int | None = None):
        self.size = workers if workers is not None else default_workers()
        if self.size < 1:
            raise ValueError("worker count must be at least 1")
        self._queues = [deque() for _ in range(self.size)]
        self._inject = deque()
        self._cv = threading.Condition(threading.Lock())
        self._idle = 0
        self._closed = False
        self.tasks_run = 0
        self._threads = [
            threading.Thread(target=self._work, args=(k,), name=f"fut-worker-{k + 1}", daemon=True)
            for k in range(self.size)
        ]
        for t in self._threads:
            t.start()

    def __enter__(self) -> Scheduler:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def on_worker(self) -> bool:
        return getattr(_local, "scheduler", None) is self

    def spawn(self, fn: Callable, *args) -> None:
        if self._closed:
            raise RuntimeError("scheduler is closed")
        if getattr(_local, "scheduler", None) is self:
            self._queues[_local.worker_id - 1].append((fn, args))
        else:
            self._inject.append((fn, args))
        if self._idle:
            with self._cv:
                self._cv.notify()

    def _has_work(self) -> bool:
        return bool(self._inject) or any(self._queues)

    def _next_task(self, k: int):
        try:
            return self._queues[k].pop()
        except IndexError:
            pass
        try:
            return self._inject.popleft()
        except IndexError:
            pass
        n = self.size
        for off in range(1, n):
            try:
                return self._queues[(k + off) % n].popleft()
            except IndexError:
                pass
        return None

    def _work(self, k: int) -> None:
        _local.scheduler = self
        _local.worker_id = k + 1
        while True:
            task = self._next_task(k)
            if task is None:
                with self._cv:
                    self._idle += 1
                    try:
                        while not self._closed and not self._has_work():
                            self._cv.wait()
                    finally:
                        self._idle -= 1
                    if self._closed and not self._has_work():
                        return
                continue
            fn, args = task
            self.tasks_run += 1
            try:
                fn(*args)
            except Exception:
                log.exception("task raised")

    def close(self) -> None:
        """Run every queued task to completion, then stop the workers."""
        with self._cv:
            self._closed = True
            self._cv.notify_all()
        for t in self._threads:
            if t is not threading.current_thread():
                t.join()


# -- evaluation context -----------------------------------------------------

@dataclass
class EvalContext:
    scheduler: Scheduler | None = None
    mode: str = "dataflow"  # or "sequential"
    kernels: Mapping[str, CompiledKernel] = field(default_factory=dict)
    counters: bool = False
    trace: TraceSink | None = None
    max_depth: int = DEFAULT_MAX_DEPTH
    max_iterations: int | None = None
    fold: bool = False
    cache: KernelCache | None = None

    def __post_init__(self):
        if self.mode not in ("dataflow", "sequential"):
            raise ValueError(f"unknown mode {self.mode!r}")


class Frame:
    __slots__ = ("slots", "depth")

    def __init__(self, size: int, depth: int):
        self.slots = [_UNSET] * size
        self.depth = depth


def _as_eval_error(exc: BaseException, node) -> FutError:
    if isinstance(exc, FutError):
        return exc.with_span(node.span)
    return InternalError(f"{type(exc).__name__}: {exc}", node.span)


def _enter_frame(kernel: CompiledKernel, args: Sequence, depth: int, limit: int, span) -> Frame:
    if len(args) != kernel.param_count:
        raise ArityError(
            f"{kernel.name} expects {kernel.param_count} arguments, got {len(args)}", span)
    if depth > limit:
        raise DepthLimit(f"call depth exceeds {limit} frames", span)
    frame = Frame(kernel.frame_size, depth)
    frame.slots[: len(args)] = args
    return frame


def _read_slot(node, frame: Frame):
    value = frame.slots[node.slot]
    if value is _UNSET:
        raise UnboundVariable(f"variable ${node.slot} read before assignment", node.span)
    return value


def _write_slot(node, frame: Frame, args: list) -> Datum:
    """Apply step of define/store/store_row."""
    if node.kind == "store_row":
        current = frame.slots[node.slot]
        if current is _UNSET:
            raise UnboundVariable(f"store_row to unassigned ${node.slot}", node.span)
        value = replace_row(current, args[0], args[1])
    else:
        value = args[0]
    frame.slots[node.slot] = value
    return value


class _Activation:
    """Bookkeeping for one dataflow evaluation of one node."""

    __slots__ = ("node", "frame", "future", "t_req", "excl", "ok", "bad", "iters")

    def __init__(self, node, frame, future, t_req):
        self.node = node
        self.frame = frame
        self.future = future
        self.t_req = t_req
        self.excl = 0
        self.ok = None
        self.bad = None
        self.iters = 0


class _Dataflow:
    def __init__(self, ctx: EvalContext):
        self.ctx = ctx
        self.spawn = ctx.scheduler.spawn
        self.kernels = ctx.kernels
        self.counting = ctx.counters
        self.trace = ctx.trace

    # leaves and task launch

    def evaluate(self, node, frame: Frame) -> FutureHandle:
        kind = node.kind
        if kind == "const" or kind == "var":
            t0 = _now()
            if self.trace:
                self.trace.begin(node, current_worker_id())
            try:
                value = node.value if kind == "const" else _read_slot(node, frame)
                fut = FutureHandle.ready(value)
            except FutError as exc:
                fut = FutureHandle.failed_with(exc)
            if self.trace:
                self.trace.end(node, current_worker_id())
            if self.counting:
                dt = _now() - t0
                node.counters.add(dt, dt)
            return fut
        fut = FutureHandle()
        self.spawn(self._start, _Activation(node, frame, fut, _now()))
        return fut

    def _start(self, act: _Activation) -> None:
        kind = act.node.kind
        try:
            if kind == "block":
                self._block(act, 0)
            elif kind == "if":
                self._if(act)
            elif kind == "while":
                self._while(act)
            else:
                self._join(act)
        except Exception as exc:  # a bug, not a language error; fail rather than hang
            if not act.future.done():
                self._finish(act, _now(), error=_as_eval_error(exc, act.node))

    def _finish(self, act: _Activation, t_step: int, value=None, error=None, began=False):
        node = act.node
        if self.trace:
            wid = current_worker_id()
            if not began:
                self.trace.begin(node, wid)
            self.trace.end(node, wid)
        if self.counting:
            t_end = _now()
            act.excl += t_end - t_step
            node.counters.add(t_end - act.t_req, act.excl)
        if error is not None:
            act.future.fail(error)
        else:
            act.future.resolve(value)

    def _forward(self, act: _Activation, handle: FutureHandle) -> None:
        """Finish ``act`` with whatever ``handle`` resolves to."""
        def done(h):
            self._finish(act, _now(), h.value, h.error)
        if handle.done():
            done(handle)
        else:
            handle.add_done_callback(done)

    # pure kinds, calls and bindings: all children at once, then apply

    def _join(self, act: _Activation) -> None:
        t0 = _now()
        frame = act.frame
        handles = [self.evaluate(c, frame) for c in act.node.children]
        for h in handles:
            if h.failed:
                self._finish(act, t0, error=h.error)
                return
        pending = [h for h in handles if not h.done()]
        if not pending:
            act.excl += _now() - t0
            self._apply(act, handles)
            return
        act.ok = itertools.count(1)
        act.bad = itertools.count()
        need = len(pending)

        def child_done(h):
            if h.error is not None:
                # next() on itertools.count is atomic; only the first failure reports
                if next(act.bad) == 0:
                    self._finish(act, _now(), error=h.error)
            elif next(act.ok) == need:
                self._apply(act, handles)

        act.excl += _now() - t0
        for h in pending:
            h.add_done_callback(child_done)

    def _apply(self, act: _Activation, handles: list) -> None:
        node = act.node
        t0 = _now()
        args = [h.value for h in handles]
        if node.kind == "call":
            try:
                kernel = self.kernels[node.callee]
                frame = _enter_frame(kernel, args, act.frame.depth + 1,
                                     self.ctx.max_depth, node.span)
            except Exception as exc:
                self._finish(act, t0, error=_as_eval_error(exc, node))
                return
            result = self.evaluate(kernel.root, frame)
            act.excl += _now() - t0
            self._forward(act, result)
            return
        if self.trace:
            self.trace.begin(node, current_worker_id())
        try:
            if node.prim.pure:
                value = node.prim.apply(*args)
            else:
                value = _write_slot(node, act.frame, args)
        except Exception as exc:
            self._finish(act, t0, error=_as_eval_error(exc, node), began=True)
        else:
            self._finish(act, t0, value, began=True)

    # sequencing kinds

    def _block(self, act: _Activation, i: int) -> None:
        t0 = _now()
        children = act.node.children
        last = len(children) - 1
        while True:
            h = self.evaluate(children[i], act.frame)
            if not h.done():
                break
            if h.failed or i == last:
                self._finish(act, t0, h.value, h.error)
                return
            i += 1
        act.excl += _now() - t0

        def resume(h, i=i):
            if h.failed or i == last:
                self._finish(act, _now(), h.value, h.error)
            else:
                self._block(act, i + 1)
        h.add_done_callback(resume)

    def _if(self, act: _Activation) -> None:
        t0 = _now()
        cond = self.evaluate(act.node.children[0], act.frame)
        act.excl += _now() - t0
        if cond.done():
            self._if_branch(act, cond)
        else:
            cond.add_done_callback(lambda h: self._if_branch(act, h))

    def _if_branch(self, act: _Activation, cond: FutureHandle) -> None:
        t0 = _now()
        node = act.node
        if cond.failed:
            self._finish(act, t0, error=cond.error)
            return
        try:
            taken = as_condition(cond.value)
        except FutError as exc:
            self._finish(act, t0, error=exc.with_span(node.children[0].span))
            return
        if not taken and len(node.children) < 3:
            self._finish(act, t0, None)
            return
        branch = self.evaluate(node.children[1 if taken else 2], act.frame)
        act.excl += _now() - t0
        self._forward(act, branch)

    def _while(self, act: _Activation) -> None:
        node = act.node
        cond_node, body_node = node.children
        limit = self.ctx.max_iterations
        while True:
            t0 = _now()
            h = self.evaluate(cond_node, act.frame)
            if not h.done():
                act.excl += _now() - t0
                h.add_done_callback(lambda h: self._while_cond(act, h, resume=True))
                return
            if not self._while_cond(act, h, resume=False):
                return
            t0 = _now()
            if limit is not None and act.iters >= limit:
                self._finish(act, t0, error=DepthLimit(
                    f"while loop exceeded {limit} iterations", node.span))
                return
            act.iters += 1
            b = self.evaluate(body_node, act.frame)
            act.excl += _now() - t0
            if not b.done():
                b.add_done_callback(lambda h: self._while_body(act, h))
                return
            if b.failed:
                self._finish(act, _now(), error=b.error)
                return

    def _while_cond(self, act: _Activation, h: FutureHandle, resume: bool) -> bool:
        """Handle a resolved condition. Returns True when the body should run
        inline (only when called synchronously from :meth:`_while`)."""
        t0 = _now()
        if h.failed:
            self._finish(act, t0, error=h.error)
            return False
        try:
            go = as_condition(h.value)
        except FutError as exc:
            self._finish(act, t0, error=exc.with_span(act.node.children[0].span))
            return False
        if not go:
            self._finish(act, t0, None)
            return False
        if not resume:
            return True
        limit = self.ctx.max_iterations
        if limit is not None and act.iters >= limit:
            self._finish(act, t0, error=DepthLimit(
                f"while loop exceeded {limit} iterations", act.node.span))
            return False
        act.iters += 1
        b = self.evaluate(act.node.children[1], act.frame)
        act.excl += _now() - t0
        if b.done():
            self._while_body(act, b)
        else:
            b.add_done_callback(lambda h: self._while_body(act, h))
        return False

    def _while_body(self, act: _Activation, h: FutureHandle) -> None:
        if h.failed:
            self._finish(act, _now(), error=h.error)
        else:
            self._while(act)


# -- sequential reference ---------------------------------------------------

class _Sequential:
    def __init__(self, ctx: EvalContext):
        self.ctx = ctx
        self.kernels = ctx.kernels
        self.counting = ctx.counters
        self.trace = ctx.trace

    def evaluate(self, node, frame: Frame) -> Datum:
        t0 = _now()
        trace = self.trace
        if trace:
            trace.begin(node, 0)
        inner = [0]
        try:
            return self._eval(node, frame, inner)
        except FutError as exc:
            raise exc.with_span(node.span)
        except RecursionError:
            raise DepthLimit("interpreter stack exhausted", node.span) from None
        except Exception as exc:
            raise _as_eval_error(exc, node) from exc
        finally:
            if trace:
                trace.end(node, 0)
            if self.counting:
                total = _now() - t0
                node.counters.add(total, total - inner[0])

    def _child(self, node, frame: Frame, inner: list) -> Datum:
        t0 = _now()
        try:
            return self.evaluate(node, frame)
        finally:
            inner[0] += _now() - t0

    def _eval(self, node, frame: Frame, inner: list) -> Datum:
        kind = node.kind
        if kind == "const":
            return node.value
        if kind == "var":
            return _read_slot(node, frame)
        kids = node.children
        if kind == "block":
            value = None
            for c in kids:
                value = self._child(c, frame, inner)
            return value
        if kind == "if":
            taken = self._child(kids[0], frame, inner)
            try:
                taken = as_condition(taken)
            except FutError as exc:
                raise exc.with_span(kids[0].span)
            if taken:
                return self._child(kids[1], frame, inner)
            return self._child(kids[2], frame, inner) if len(kids) > 2 else None
        if kind == "while":
            limit = self.ctx.max_iterations
            iters = 0
            while True:
                go = self._child(kids[0], frame, inner)
                try:
                    go = as_condition(go)
                except FutError as exc:
                    raise exc.with_span(kids[0].span)
                if not go:
                    return None
                if limit is not None and iters >= limit:
                    raise DepthLimit(f"while loop exceeded {limit} iterations", node.span)
                iters += 1
                self._child(kids[1], frame, inner)
        args = [self._child(c, frame, inner) for c in kids]
        if kind == "call":
            kernel = self.kernels[node.callee]
            callee = _enter_frame(kernel, args, frame.depth + 1, self.ctx.max_depth, node.span)
            return self._child(kernel.root, callee, inner)
        if node.prim.pure:
            return node.prim.apply(*args)
        return _write_slot(node, frame, args)


_BIG_STACK = 512 * 1024 * 1024
_stack_lock = threading.Lock()


def _on_big_stack(fn: Callable[[], Datum]) -> Datum:
    """Run ``fn`` in a helper thread whose stack fits deep kernel recursion."""
    box: dict = {}

    def target():
        try:
            box["value"] = fn()
        except BaseException as exc:
            box["error"] = exc

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 1_000_000))
    with _stack_lock:
        old_size = threading.stack_size(_BIG_STACK)
        try:
            t = threading.Thread(target=target, name="fut-sequential")
            t.start()
        finally:
            threading.stack_size(old_size)
    t.join()
    if "error" in box:
        raise box["error"]
    return box["value"]


# -- public API -------------------------------------------------------------

def eval_kernel(kernel: CompiledKernel, args: Sequence[Datum], ctx: EvalContext,
                timeout: float | None = None) -> Datum:
    """Evaluate ``kernel`` on ``args`` in the context's mode."""
    kernels = ctx.kernels if ctx.kernels else {kernel.name: kernel}
    if kernels is not ctx.kernels:
        ctx = EvalContext(**{**ctx.__dict__, "kernels": kernels})
    frame = _enter_frame(kernel, list(args), 1, ctx.max_depth, kernel.root.span)
    if ctx.mode == "sequential":
        runner = _Sequential(ctx)
        return _on_big_stack(lambda: runner.evaluate(kernel.root, frame))
    if ctx.scheduler is None:
        raise ValueError("dataflow mode needs a scheduler")
    if ctx.scheduler.on_worker():
        raise RuntimeError("eval_kernel must not be called from a worker thread")
    return _Dataflow(ctx).evaluate(kernel.root, frame).result(timeout)


def eval_sequential(kernel: CompiledKernel, args: Sequence[Datum],
                    ctx: EvalContext | None = None) -> Datum:
    ctx = EvalContext(**{**(ctx or EvalContext()).__dict__, "mode": "sequential"})
    return eval_kernel(kernel, args, ctx)


_default_cache = KernelCache()


def default_cache() -> KernelCache:
    return _default_cache


def run_program(program: physl.Ast | str | Program, entry: str,
                args: Sequence[Datum] | Mapping[str, Datum] = (),
                ctx: EvalContext | None = None, timeout: float | None = None) -> Datum:
    """Compile (through the kernel cache) and evaluate ``entry``.

    ``program`` may be PhySL text, a parsed AST or an already compiled
    :class:`Program`. Named ``args`` are matched to the entry's parameters.
    When counters are enabled they are reset first, so they describe this run.
    """
    ctx = ctx or EvalContext(mode="sequential")
    if isinstance(program, str):
        program = physl.parse(program)
    if not isinstance(program, Program):
        cache = ctx.cache if ctx.cache is not None else _default_cache
        program = compile_program(program, cache=cache, fold=ctx.fold)
    kernel = program.kernel(entry)
    if isinstance(args, Mapping):
        missing = [p for p in kernel.params if p not in args]
        extra = [k for k in args if k not in kernel.params]
        if missing or extra:
            raise ArityError(
                f"{entry} takes ({', '.join(kernel.params)}); "
                f"missing {missing or 'none'}, unexpected {extra or 'none'}", kernel.root.span)
        args = [args[p] for p in kernel.params]
    if ctx.counters:
        program.reset_counters()
    run_ctx = EvalContext(**{**ctx.__dict__, "kernels": program.kernels})
    return eval_kernel(kernel, args, run_ctx, timeout)
