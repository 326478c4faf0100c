"""Serial numeric loops compiled with numba.

Every reduction accumulates left to right over the contraction index starting
from 0.0, so results are bitwise reproducible and match a plain Python loop.
The kernels release the GIL so independent tree nodes can overlap.
"""
from __future__ import annotations

import numpy as np
from numba import njit

SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
SPLITMIX_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
SPLITMIX_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_M53 = 1.0 / 9007199254740992.0

SINGULAR_PIVOT = 1e-12

_jit = njit(nogil=True, cache=True)


@_jit
def dot_vv(a, b):
    s = 0.0
    for k in range(a.shape[0]):
        s += a[k] * b[k]
    return s


@_jit
def dot_mv(m, v):
    rows, cols = m.shape
    out = np.empty(rows)
    for i in range(rows):
        s = 0.0
        for k in range(cols):
            s += m[i, k] * v[k]
        out[i] = s
    return out


@_jit
def dot_vm(v, m):
    rows, cols = m.shape
    out = np.zeros(cols)
    for k in range(rows):
        vk = v[k]
        for j in range(cols):
            out[j] += vk * m[k, j]
    return out


@_jit
def dot_mm(a, b):
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for k in range(inner):
            aik = a[i, k]
            for j in range(cols):
                out[i, j] += aik * b[k, j]
    return out


@_jit
def serial_sum(flat):
    s = 0.0
    for k in range(flat.shape[0]):
        s += flat[k]
    return s


@_jit
def gauss_solve(a, b):
    """Solve a @ x = b (b is n x k). Returns (x, failing_column or -1)."""
    n = a.shape[0]
    k = b.shape[1]
    m = a.copy()
    x = b.copy()
    for col in range(n):
        pivot = col
        best = abs(m[col, col])
        for r in range(col + 1, n):
            cand = abs(m[r, col])
            if cand > best:
                best = cand
                pivot = r
        if not best >= SINGULAR_PIVOT:
            return x, col
        if pivot != col:
            for c in range(n):
                tmp = m[col, c]
                m[col, c] = m[pivot, c]
                m[pivot, c] = tmp
            for j in range(k):
                tmp = x[col, j]
                x[col, j] = x[pivot, j]
                x[pivot, j] = tmp
        for r in range(col + 1, n):
            factor = m[r, col] / m[col, col]
            for c in range(col, n):
                m[r, c] -= factor * m[col, c]
            for j in range(k):
                x[r, j] -= factor * x[col, j]
    for r in range(n - 1, -1, -1):
        for j in range(k):
            s = x[r, j]
            for c in range(r + 1, n):
                s -= m[r, c] * x[c, j]
            x[r, j] = s / m[r, r]
    return x, -1


@_jit
def splitmix_uniform(seed, count):
    out = np.empty(count)
    state = seed
    for i in range(count):
        state = state + SPLITMIX_GAMMA
        z = state
        z = (z ^ (z >> np.uint64(30))) * SPLITMIX_MIX1
        z = (z ^ (z >> np.uint64(27))) * SPLITMIX_MIX2
        z = z ^ (z >> np.uint64(31))
        out[i] = np.float64(z >> np.uint64(11)) * _TWO_POW_M53
    return out
