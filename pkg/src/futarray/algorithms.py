"""Benchmark programs, synthetic data and corpus access.

The corpus directory ships each program as PyLite source (``<name>.py``),
its frozen PhySL lowering (``<name>.physl``) and a test manifest
(``<name>.expect.json``). Error-path programs live under ``corpus/errors``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import values
from .executor import EvalContext, run_program
from .frontend import transpile
from .values import Datum

CORPUS_DIR = Path(__file__).parent / "corpus"
PROGRAMS = ("factorial", "lra", "als")
_U64 = 1 << 64


@dataclass(frozen=True)
class LraConfig:
    n: int = 2000
    d: int = 200
    alpha: float = 0.001
    iterations: int = 100
    seed: int = 1

    def __post_init__(self):
        if min(self.n, self.d, self.iterations) < 1:
            raise ValueError("n, d and iterations must be at least 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class AlsConfig:
    m: int = 200
    n: int = 150
    f: int = 16
    lam: float = 0.1
    alpha_c: float = 40.0
    sweeps: int = 5
    seed: int = 1
    density: float = 0.1

    def __post_init__(self):
        if min(self.m, self.n, self.f, self.sweeps) < 1:
            raise ValueError("m, n, f and sweeps must be at least 1")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0 < self.density <= 1:
            raise ValueError("density must be in (0, 1]")


def gen_lra_data(cfg: LraConfig) -> tuple[np.ndarray, np.ndarray]:
    """Features uniform in [-1, 1) plus a constant last column, labels from a
    median split of ``X @ w*``.

    The constant column acts as an intercept, so the split is separable by a
    hyperplane through the origin.
    """
    X = 2.0 * np.asarray(values.random((cfg.n, cfg.d), cfg.seed)) - 1.0
    X[:, -1] = 1.0
    w_star = 2.0 * np.asarray(values.random(cfg.d, (cfg.seed + 1) % _U64)) - 1.0
    score = values.dot(values.freeze(X), values.freeze(w_star))
    score = np.atleast_1d(np.asarray(score))
    y = (score > np.median(score)).astype(np.float64)
    return values.freeze(X), values.freeze(y)


def gen_als_data(cfg: AlsConfig) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-feedback counts R (integers 1..5 at ``density``) and P = [R > 0]."""
    hit = np.asarray(values.random((cfg.m, cfg.n), cfg.seed)) < cfg.density
    counts = 1.0 + np.floor(5.0 * np.asarray(values.random((cfg.m, cfg.n), (cfg.seed + 1) % _U64)))
    R = np.where(hit, counts, 0.0)
    P = (R > 0).astype(np.float64)
    return values.freeze(R), values.freeze(P)


def lra_args(cfg: LraConfig) -> dict[str, Datum]:
    X, y = gen_lra_data(cfg)
    return {"X": X, "y": y, "alpha": float(cfg.alpha), "iterations": cfg.iterations}


def als_args(cfg: AlsConfig) -> dict[str, Datum]:
    R, P = gen_als_data(cfg)
    return {"R": R, "P": P, "f": cfg.f, "lam": float(cfg.lam),
            "alpha_c": float(cfg.alpha_c), "sweeps": cfg.sweeps, "seed": cfg.seed}


def accuracy(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    pred = (np.asarray(X) @ np.asarray(w)) > 0
    return float(np.mean(pred == (np.asarray(y) > 0.5)))


# -- corpus -----------------------------------------------------------------

def corpus_path(name: str, suffix: str) -> Path:
    return CORPUS_DIR / f"{name}{suffix}"


def load_source(name: str) -> str:
    return corpus_path(name, ".py").read_text(encoding="utf-8")


def load_golden(name: str) -> str:
    return corpus_path(name, ".physl").read_text(encoding="utf-8")


def load_expect(name: str) -> dict[str, Any]:
    return json.loads(corpus_path(name, ".expect.json").read_text(encoding="utf-8"))


def program_text(name: str) -> str:
    """PhySL text for a corpus program, lowered from its PyLite source."""
    return transpile(load_source(name))


def error_cases() -> list[tuple[Path, dict[str, Any]]]:
    """(program path, manifest) for every error-path corpus file."""
    out = []
    for manifest in sorted((CORPUS_DIR / "errors").glob("*.expect.json")):
        meta = json.loads(manifest.read_text(encoding="utf-8"))
        out.append((manifest.parent / meta["file"], meta))
    return out


def decode_arg(spec: str, base: Path | None = None) -> Datum:
    """Decode a typed argument: ``int:5``, ``float:0.5``, ``seed:7`` or ``csv:path``."""
    tag, sep, body = spec.partition(":")
    if not sep:
        raise ValueError(f"argument {spec!r} needs a type prefix (int:, float:, csv:, seed:)")
    if tag == "int":
        return values.check_int(int(body))
    if tag == "seed":
        return int(body) % _U64
    if tag == "float":
        return float(body)
    if tag == "csv":
        path = Path(body)
        if base is not None and not path.is_absolute():
            path = base / path
        return values.from_csv(path.read_text(encoding="utf-8"))
    raise ValueError(f"unknown argument type {tag!r}")


def decode_manifest_value(v: Any) -> Datum:
    """Manifest values: typed strings as in :func:`decode_arg`, JSON numbers,
    flat lists as vectors and nested lists as matrices."""
    if isinstance(v, str):
        return decode_arg(v, CORPUS_DIR)
    if isinstance(v, list):
        if v and isinstance(v[0], list):
            return values.make_matrix(v)
        return values.make_vector(v)
    return v


def case_args(case: dict[str, Any]) -> dict[str, Datum]:
    return {k: decode_manifest_value(v) for k, v in case["args"].items()}


# -- one-call drivers -------------------------------------------------------

def run_lra(cfg: LraConfig, ctx: EvalContext | None = None,
            data: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    args = lra_args(cfg) if data is None else {
        "X": data[0], "y": data[1], "alpha": float(cfg.alpha), "iterations": cfg.iterations}
    return run_program(program_text("lra"), "lra", args, ctx)


def run_als(cfg: AlsConfig, ctx: EvalContext | None = None) -> tuple[np.ndarray, np.ndarray]:
    U, V = run_program(program_text("als"), "als", als_args(cfg), ctx)
    return U, V


def run_factorial(n: int, ctx: EvalContext | None = None) -> int:
    return run_program(program_text("factorial"), "fact", [n], ctx)
