"""Command-line driver: ``futarray transpile | run | bench``.

Exit status is 0 on success, 1 for usage and program errors (with a
``path:line:col: Kind: message`` diagnostic on stderr) and 2 for I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import statistics
import sys
import tempfile
import time
from pathlib import Path

from . import algorithms, physl
from .compiler import compile_program, dump_program
from .errors import FutError
from .executor import EvalContext, Scheduler, default_cache, default_workers, run_program
from .frontend import lower_module, parse_pylite, transpile
from .perf import TraceSink, export_counters, export_trace
from .values import format_datum

EXIT_OK, EXIT_USER, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def _resolve_program(name: str) -> Path:
    path = Path(name)
    if not path.exists() and name in algorithms.PROGRAMS:
        return algorithms.corpus_path(name, ".py")
    return path


def _thread_count(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be at least 1")
    return n


def _thread_list(text: str) -> list[int]:
    return [_thread_count(t.strip()) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="futarray", description="Transpile, run and benchmark PyLite/PhySL programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("transpile", help="lower a PyLite file to PhySL")
    t.add_argument("input")
    t.add_argument("-o", "--output", help="output .physl path (default: stdout)")

    r = sub.add_parser("run", help="evaluate a .physl or .py program")
    r.add_argument("program", help="program path, or a corpus name (factorial, lra, als)")
    r.add_argument("--entry", help="kernel to invoke (default: main, or the only kernel)")
    r.add_argument("--arg", action="append", default=[], metavar="NAME=TYPE:VALUE",
                   help="argument; TYPE is int, float, seed or csv")
    r.add_argument("--threads", type=_thread_count, help="worker count (default: $FUT_THREADS or CPU count)")
    r.add_argument("--mode", choices=("dataflow", "sequential"), default="dataflow")
    r.add_argument("--counters", metavar="CSV", help="write per-node counters")
    r.add_argument("--trace", metavar="JSON", help="write trace-event JSON")
    r.add_argument("--dump-tree", metavar="PATH", help="write the execution tree (.dot or .json)")
    r.add_argument("--fold-constants", action="store_true")
    r.add_argument("--max-depth", type=_thread_count, default=10_000, help="call depth limit")
    r.add_argument("--max-iterations", type=_thread_count, help="per-loop iteration limit")

    b = sub.add_parser("bench", help="time a corpus algorithm across worker counts")
    b.add_argument("algo", choices=("lra", "als"))
    b.add_argument("--threads", type=_thread_list, default=[1, 2, 4], help="comma list, e.g. 1,2,4")
    b.add_argument("--repeat", type=_thread_count, default=10)
    b.add_argument("--csv", metavar="PATH", help="per-run CSV (default: stdout)")
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--rows", type=int, default=algorithms.LraConfig.n)
    b.add_argument("--features", type=int, default=algorithms.LraConfig.d)
    b.add_argument("--iterations", type=int, default=algorithms.LraConfig.iterations)
    b.add_argument("--alpha", type=float, default=algorithms.LraConfig.alpha)
    b.add_argument("--users", type=int, default=algorithms.AlsConfig.m)
    b.add_argument("--items", type=int, default=algorithms.AlsConfig.n)
    b.add_argument("--factors", type=int, default=algorithms.AlsConfig.f)
    b.add_argument("--sweeps", type=int, default=algorithms.AlsConfig.sweeps)
    b.add_argument("--lam", type=float, default=algorithms.AlsConfig.lam)
    b.add_argument("--alpha-c", type=float, default=algorithms.AlsConfig.alpha_c)
    return p


# -- subcommands ------------------------------------------------------------

def cmd_transpile(ns) -> int:
    src = Path(ns.input)
    text = transpile(_read(src))
    if ns.output:
        write_atomic(ns.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_args(pairs: list[str], base: Path) -> dict:
    out = {}
    for pair in pairs:
        name, sep, spec = pair.partition("=")
        if not sep or not name:
            raise UsageError(f"--arg {pair!r}: expected NAME=TYPE:VALUE")
        if name in out:
            raise UsageError(f"--arg {name} given twice")
        try:
            out[name] = algorithms.decode_arg(spec, base)
        except ValueError as exc:
            raise UsageError(f"--arg {name}: {exc}") from None
    return out


def _pick_entry(program, requested: str | None) -> str:
    if requested:
        return requested
    if "main" in program.kernels:
        return "main"
    if len(program.kernels) == 1:
        return next(iter(program.kernels))
    names = ", ".join(sorted(program.kernels))
    raise UsageError(f"several kernels ({names}); choose one with --entry")


def cmd_run(ns) -> int:
    if ns.mode == "sequential" and ns.threads is not None and ns.threads > 1:
        raise UsageError("--mode sequential runs on the calling thread; drop --threads or use 1")
    if ns.dump_tree and Path(ns.dump_tree).suffix not in (".dot", ".json"):
        raise UsageError("--dump-tree path must end in .dot or .json")
    path = _resolve_program(ns.program)
    text = _read(path)
    ns.display_path = str(path)
    ast_ = lower_module(parse_pylite(text)) if path.suffix == ".py" else physl.parse(text)
    program = compile_program(ast_, cache=default_cache(), fold=ns.fold_constants)
    entry = _pick_entry(program, ns.entry)
    args = _parse_args(ns.arg, Path.cwd())
    trace = TraceSink() if ns.trace else None
    counting = bool(ns.counters or ns.dump_tree)
    workers = ns.threads or default_workers()
    scheduler = Scheduler(workers) if ns.mode == "dataflow" else None
    try:
        ctx = EvalContext(scheduler=scheduler, mode=ns.mode, counters=counting, trace=trace,
                          max_depth=ns.max_depth, max_iterations=ns.max_iterations,
                          fold=ns.fold_constants)
        result = run_program(program, entry, args, ctx)
    finally:
        if scheduler is not None:
            scheduler.close()
    if ns.counters:
        write_atomic(ns.counters, export_counters(program.kernels.values()))
    if ns.trace:
        write_atomic(ns.trace, export_trace(trace))
    if ns.dump_tree:
        fmt = Path(ns.dump_tree).suffix[1:]
        write_atomic(ns.dump_tree, dump_program(program, fmt, counters=True))
    sys.stdout.write(format_datum(result) + "\n")
    return EXIT_OK


def _bench_case(ns):
    if ns.algo == "lra":
        cfg = algorithms.LraConfig(n=ns.rows, d=ns.features, alpha=ns.alpha,
                                   iterations=ns.iterations, seed=ns.seed)
        return "lra", algorithms.lra_args(cfg)
    cfg = algorithms.AlsConfig(m=ns.users, n=ns.items, f=ns.factors, lam=ns.lam,
                               alpha_c=ns.alpha_c, sweeps=ns.sweeps, seed=ns.seed)
    return "als", algorithms.als_args(cfg)


def bench(algo: str, args: dict, threads: list[int], repeat: int) -> list[tuple[str, int, int, float]]:
    """Time ``repeat`` dataflow runs per worker count after one untimed warm-up."""
    program = compile_program(physl.parse(algorithms.program_text(algo)), cache=default_cache())
    rows = []
    for w in threads:
        with Scheduler(w) as sched:
            ctx = EvalContext(scheduler=sched)
            run_program(program, algo, args, ctx)
            for k in range(repeat):
                t0 = time.perf_counter_ns()
                run_program(program, algo, args, ctx)
                rows.append((algo, w, k + 1, (time.perf_counter_ns() - t0) / 1e6))
    return rows


def summarize(rows) -> str:
    means: dict[int, float] = {}
    for w in dict.fromkeys(r[1] for r in rows):
        means[w] = statistics.fmean(r[3] for r in rows if r[1] == w)
    base = means.get(1)
    lines = [f"{'threads':>7}  {'mean_ms':>10}  {'speedup':>7}"]
    for w, m in means.items():
        speed = f"{base / m:7.2f}" if base else f"{'-':>7}"
        lines.append(f"{w:>7}  {m:10.2f}  {speed}")
    return "\n".join(lines) + "\n"


def cmd_bench(ns) -> int:
    if not ns.threads:
        raise UsageError("--threads needs at least one count")
    try:
        algo, args = _bench_case(ns)
    except ValueError as exc:
        raise UsageError(f"invalid dimensions: {exc}") from None
    rows = bench(algo, args, ns.threads, ns.repeat)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["algo", "threads", "run", "elapsed_ms"])
    for algo_, w, k, ms in rows:
        out.writerow([algo_, w, k, f"{ms:.3f}"])
    if ns.csv:
        write_atomic(ns.csv, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    sys.stdout.write(summarize(rows))
    return EXIT_OK


COMMANDS = {"transpile": cmd_transpile, "run": cmd_run, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = None
    try:
        ns = parser.parse_args(argv)
        return COMMANDS[ns.command](ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USER
    except FutError as exc:
        path = getattr(ns, "display_path", None) or getattr(ns, "input", None)
        print(exc.diagnostic(path), file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"futarray: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
