"""futarray: a futurized array-language toolkit.

PyLite source is lowered to PhySL text, compiled into an execution tree of
primitives and evaluated either sequentially or as a dataflow graph of
futures on a work-stealing worker pool.
"""
from .compiler import CompiledKernel, KernelCache, Program, compile_program, dump_tree, fold_constants
from .errors import FutError, SourceSpan
from .executor import EvalContext, FutureHandle, Scheduler, eval_kernel, eval_sequential, run_program
from .frontend import lower, parse_pylite, transpile
from .physl import parse, pretty

__version__ = "0.1.0"

__all__ = [
    "CompiledKernel", "EvalContext", "FutError", "FutureHandle", "KernelCache", "Program",
    "Scheduler", "SourceSpan", "compile_program", "dump_tree", "eval_kernel", "eval_sequential",
    "fold_constants", "lower", "parse", "parse_pylite", "pretty", "run_program", "transpile",
]
