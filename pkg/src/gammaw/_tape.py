"""Batch evaluation of scalar fields over many points.

An expression tree is flattened once into a register tape (common subtrees
deduplicated), then the tape is run over a batch of points by one of two
interchangeable backends:

* a numba kernel that walks the tape per point with reused register buffers;
* a chunked pure-numpy interpreter.

Set ``GAMMAW_BACKEND=numpy`` to force the fallback; ``numba`` to require the
compiled kernels (raises if numba is unavailable).  Default is numba when
importable.  Both backends implement identical semantics, including the
domain-error codes, and the test suite pins them against each other.

Domain violations do not raise here; each point gets an error code (0 ok,
1 division by zero, 2 log domain, 3 sqrt domain, 4 power domain) and a NaN
value, so callers can skip or report bad points in bulk.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .field_expr import (
    Add,
    Const,
    Coord,
    Div,
    Dot,
    Exp,
    Log,
    Mul,
    Node,
    NormSq,
    Pow,
    ScalarField,
    Sqrt,
    Sub,
)

__all__ = ["Tape", "compile_tape", "eval_values", "eval_values_grads", "backend_name", "HAS_NUMBA"]

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


OP_CONST = 0
OP_COORD = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_EXP = 7
OP_LOG = 8
OP_SQRT = 9
OP_NORMSQ = 10
OP_DOT = 11

ERR_NONE = 0
ERR_DIV = 1
ERR_LOG = 2
ERR_SQRT = 3
ERR_POW = 4

_ERR_TEXT = {
    ERR_DIV: "division by zero",
    ERR_LOG: "log outside its domain",
    ERR_SQRT: "sqrt outside its domain",
    ERR_POW: "power outside its domain",
}


def err_message(code: int) -> str:
    return _ERR_TEXT.get(int(code), f"unknown error code {code}")


@dataclass
class Tape:
    """Flattened expression: one register per distinct subtree."""

    ops: np.ndarray  # (K,) int64 opcodes
    a1: np.ndarray  # (K,) int64 first operand (register or table index)
    a2: np.ndarray  # (K,) int64 second operand
    consts: np.ndarray  # (C,) float64 literal pool (values and exponents)
    vecs: np.ndarray  # (V, dim) float64 dot-product coefficient rows
    dim: int

    @property
    def n_registers(self) -> int:
        return int(self.ops.shape[0])


def compile_tape(f: ScalarField) -> Tape:
    """Flatten ``f`` into a tape, deduplicating repeated subtrees.

    The result is cached on the field, which is safe because fields are
    immutable.
    """
    if f._tape is not None:
        return f._tape
    ops: list[int] = []
    a1: list[int] = []
    a2: list[int] = []
    consts: list[float] = []
    vecs: list[tuple[float, ...]] = []
    seen: dict[Node, int] = {}

    def emit(op: int, x1: int = 0, x2: int = 0) -> int:
        ops.append(op)
        a1.append(x1)
        a2.append(x2)
        return len(ops) - 1

    def pool(c: float) -> int:
        consts.append(float(c))
        return len(consts) - 1

    def visit(n: Node) -> int:
        reg = seen.get(n)
        if reg is not None:
            return reg
        if isinstance(n, Const):
            reg = emit(OP_CONST, pool(n.c))
        elif isinstance(n, Coord):
            reg = emit(OP_COORD, n.i)
        elif isinstance(n, Add):
            reg = emit(OP_ADD, visit(n.a), visit(n.b))
        elif isinstance(n, Sub):
            reg = emit(OP_SUB, visit(n.a), visit(n.b))
        elif isinstance(n, Mul):
            reg = emit(OP_MUL, visit(n.a), visit(n.b))
        elif isinstance(n, Div):
            reg = emit(OP_DIV, visit(n.a), visit(n.b))
        elif isinstance(n, Pow):
            reg = emit(OP_POW, visit(n.a), pool(n.expo))
        elif isinstance(n, Exp):
            reg = emit(OP_EXP, visit(n.a))
        elif isinstance(n, Log):
            reg = emit(OP_LOG, visit(n.a))
        elif isinstance(n, Sqrt):
            reg = emit(OP_SQRT, visit(n.a))
        elif isinstance(n, NormSq):
            reg = emit(OP_NORMSQ)
        elif isinstance(n, Dot):
            vecs.append(n.coeffs)
            reg = emit(OP_DOT, len(vecs) - 1)
        else:
            raise TypeError(f"unknown node {n!r}")
        seen[n] = reg
        return reg

    visit(f.root)
    tape = Tape(
        ops=np.asarray(ops, dtype=np.int64),
        a1=np.asarray(a1, dtype=np.int64),
        a2=np.asarray(a2, dtype=np.int64),
        consts=np.asarray(consts if consts else [0.0], dtype=np.float64),
        vecs=np.asarray(vecs, dtype=np.float64).reshape(len(vecs), f.dim)
        if vecs
        else np.zeros((0, f.dim)),
        dim=f.dim,
    )
    f._tape = tape
    return tape


def backend_name() -> str:
    """Active backend after applying the GAMMAW_BACKEND override."""
    choice = os.environ.get("GAMMAW_BACKEND", "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("GAMMAW_BACKEND=numba but numba is not importable")
        return "numba"
    if choice not in ("", "auto"):
        raise ValueError(f"GAMMAW_BACKEND must be 'numba', 'numpy' or 'auto', got {choice!r}")
    return "numba" if HAS_NUMBA else "numpy"


def eval_values(f: ScalarField, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``f`` at each row of ``pts``; returns (values, error codes)."""
    tape = compile_tape(f)
    pts = _as_points(pts, tape.dim)
    if backend_name() == "numba":
        return _values_numba(tape.ops, tape.a1, tape.a2, tape.consts, tape.vecs, pts)
    return _values_numpy(tape, pts)


def eval_values_grads(f: ScalarField, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate values and gradients of ``f`` at each row of ``pts``."""
    tape = compile_tape(f)
    pts = _as_points(pts, tape.dim)
    if backend_name() == "numba":
        return _grads_numba(tape.ops, tape.a1, tape.a2, tape.consts, tape.vecs, pts)
    return _grads_numpy(tape, pts)


def _as_points(pts: np.ndarray, dim: int) -> np.ndarray:
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(pts, dtype=np.float64)))
    if pts.shape[1] != dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {dim}")
    return pts


# ---------------------------------------------------------------------------
# numba kernels: per-point register loop, buffers reused across points
# ---------------------------------------------------------------------------


@njit(cache=True)
def _pow_pair(v, e):  # returns (value, derivative factor u1, err)
    ei = round(e)
    is_int = abs(e - ei) < 1e-12
    if v > 0.0:
        return v**e, e * v ** (e - 1.0), 0
    if not is_int:
        return np.nan, np.nan, ERR_POW
    if v == 0.0:
        if ei < 0:
            return np.nan, np.nan, ERR_POW
        val = 1.0 if ei == 0 else 0.0
        der = 1.0 if ei == 1 else 0.0
        return val, der, 0
    return v**e, e * v ** (e - 1.0), 0


@njit(cache=True)
def _values_numba(ops, a1, a2, consts, vecs, pts):
    m, n = pts.shape
    k_regs = ops.shape[0]
    out = np.empty(m)
    err = np.zeros(m, dtype=np.int64)
    reg = np.empty(k_regs)
    for p in range(m):
        code = 0
        for k in range(k_regs):
            op = ops[k]
            if op == OP_CONST:
                reg[k] = consts[a1[k]]
            elif op == OP_COORD:
                reg[k] = pts[p, a1[k]]
            elif op == OP_ADD:
                reg[k] = reg[a1[k]] + reg[a2[k]]
            elif op == OP_SUB:
                reg[k] = reg[a1[k]] - reg[a2[k]]
            elif op == OP_MUL:
                reg[k] = reg[a1[k]] * reg[a2[k]]
            elif op == OP_DIV:
                d = reg[a2[k]]
                if d == 0.0:
                    code = ERR_DIV
                    break
                reg[k] = reg[a1[k]] / d
            elif op == OP_POW:
                val, _, perr = _pow_pair(reg[a1[k]], consts[a2[k]])
                if perr != 0:
                    code = perr
                    break
                reg[k] = val
            elif op == OP_EXP:
                reg[k] = math.exp(reg[a1[k]])
            elif op == OP_LOG:
                v = reg[a1[k]]
                if v <= 0.0:
                    code = ERR_LOG
                    break
                reg[k] = math.log(v)
            elif op == OP_SQRT:
                v = reg[a1[k]]
                if v < 0.0:
                    code = ERR_SQRT
                    break
                reg[k] = math.sqrt(v)
            elif op == OP_NORMSQ:
                s = 0.0
                for j in range(n):
                    s += pts[p, j] * pts[p, j]
                reg[k] = s
            else:  # OP_DOT
                s = 0.0
                for j in range(n):
                    s += vecs[a1[k], j] * pts[p, j]
                reg[k] = s
        if code != 0:
            err[p] = code
            out[p] = np.nan
        else:
            out[p] = reg[k_regs - 1]
    return out, err


@njit(cache=True)
def _grads_numba(ops, a1, a2, consts, vecs, pts):
    m, n = pts.shape
    k_regs = ops.shape[0]
    out = np.empty(m)
    grads = np.empty((m, n))
    err = np.zeros(m, dtype=np.int64)
    reg = np.empty(k_regs)
    dreg = np.empty((k_regs, n))
    for p in range(m):
        code = 0
        for k in range(k_regs):
            op = ops[k]
            if op == OP_CONST:
                reg[k] = consts[a1[k]]
                for j in range(n):
                    dreg[k, j] = 0.0
            elif op == OP_COORD:
                reg[k] = pts[p, a1[k]]
                for j in range(n):
                    dreg[k, j] = 0.0
                dreg[k, a1[k]] = 1.0
            elif op == OP_ADD:
                i1, i2 = a1[k], a2[k]
                reg[k] = reg[i1] + reg[i2]
                for j in range(n):
                    dreg[k, j] = dreg[i1, j] + dreg[i2, j]
            elif op == OP_SUB:
                i1, i2 = a1[k], a2[k]
                reg[k] = reg[i1] - reg[i2]
                for j in range(n):
                    dreg[k, j] = dreg[i1, j] - dreg[i2, j]
            elif op == OP_MUL:
                i1, i2 = a1[k], a2[k]
                va, vb = reg[i1], reg[i2]
                reg[k] = va * vb
                for j in range(n):
                    dreg[k, j] = va * dreg[i2, j] + vb * dreg[i1, j]
            elif op == OP_DIV:
                i1, i2 = a1[k], a2[k]
                vb = reg[i2]
                if vb == 0.0:
                    code = ERR_DIV
                    break
                q = reg[i1] / vb
                reg[k] = q
                for j in range(n):
                    dreg[k, j] = (dreg[i1, j] - q * dreg[i2, j]) / vb
            elif op == OP_POW:
                i1 = a1[k]
                val, u1, perr = _pow_pair(reg[i1], consts[a2[k]])
                if perr != 0:
                    code = perr
                    break
                reg[k] = val
                for j in range(n):
                    dreg[k, j] = u1 * dreg[i1, j]
            elif op == OP_EXP:
                i1 = a1[k]
                e = math.exp(reg[i1])
                reg[k] = e
                for j in range(n):
                    dreg[k, j] = e * dreg[i1, j]
            elif op == OP_LOG:
                i1 = a1[k]
                v = reg[i1]
                if v <= 0.0:
                    code = ERR_LOG
                    break
                reg[k] = math.log(v)
                for j in range(n):
                    dreg[k, j] = dreg[i1, j] / v
            elif op == OP_SQRT:
                i1 = a1[k]
                v = reg[i1]
                if v <= 0.0:
                    code = ERR_SQRT
                    break
                s = math.sqrt(v)
                reg[k] = s
                u1 = 0.5 / s
                for j in range(n):
                    dreg[k, j] = u1 * dreg[i1, j]
            elif op == OP_NORMSQ:
                s = 0.0
                for j in range(n):
                    s += pts[p, j] * pts[p, j]
                    dreg[k, j] = 2.0 * pts[p, j]
                reg[k] = s
            else:  # OP_DOT
                s = 0.0
                for j in range(n):
                    c = vecs[a1[k], j]
                    s += c * pts[p, j]
                    dreg[k, j] = c
                reg[k] = s
        if code != 0:
            err[p] = code
            out[p] = np.nan
            for j in range(n):
                grads[p, j] = np.nan
        else:
            out[p] = reg[k_regs - 1]
            for j in range(n):
                grads[p, j] = dreg[k_regs - 1, j]
    return out, grads, err


# ---------------------------------------------------------------------------
# numpy fallback: vectorized over chunks of points
# ---------------------------------------------------------------------------

_CHUNK = 8192


def _values_numpy(tape: Tape, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = pts.shape[0]
    out = np.empty(m)
    err = np.zeros(m, dtype=np.int64)
    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        vals, _, codes = _run_numpy(tape, pts[lo:hi], want_grads=False)
        out[lo:hi], err[lo:hi] = vals, codes
    return out, err


def _grads_numpy(tape: Tape, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m, n = pts.shape
    out = np.empty(m)
    grads = np.empty((m, n))
    err = np.zeros(m, dtype=np.int64)
    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        out[lo:hi], grads[lo:hi], err[lo:hi] = _run_numpy(tape, pts[lo:hi], want_grads=True)
    return out, grads, err


def _run_numpy(tape: Tape, pts: np.ndarray, want_grads: bool):
    m, n = pts.shape
    k_regs = tape.n_registers
    reg = np.empty((k_regs, m))
    dreg = np.zeros((k_regs, m, n)) if want_grads else None
    err = np.zeros(m, dtype=np.int64)

    def flag(bad: np.ndarray, code: int) -> None:
        fresh = bad & (err == 0)
        err[fresh] = code

    with np.errstate(all="ignore"):
        for k in range(k_regs):
            op = int(tape.ops[k])
            i1, i2 = int(tape.a1[k]), int(tape.a2[k])
            if op == OP_CONST:
                reg[k] = tape.consts[i1]
            elif op == OP_COORD:
                reg[k] = pts[:, i1]
                if want_grads:
                    dreg[k, :, i1] = 1.0
            elif op == OP_ADD:
                reg[k] = reg[i1] + reg[i2]
                if want_grads:
                    dreg[k] = dreg[i1] + dreg[i2]
            elif op == OP_SUB:
                reg[k] = reg[i1] - reg[i2]
                if want_grads:
                    dreg[k] = dreg[i1] - dreg[i2]
            elif op == OP_MUL:
                reg[k] = reg[i1] * reg[i2]
                if want_grads:
                    dreg[k] = reg[i1][:, None] * dreg[i2] + reg[i2][:, None] * dreg[i1]
            elif op == OP_DIV:
                flag(reg[i2] == 0.0, ERR_DIV)
                denom = np.where(reg[i2] == 0.0, 1.0, reg[i2])
                reg[k] = reg[i1] / denom
                if want_grads:
                    dreg[k] = (dreg[i1] - reg[k][:, None] * dreg[i2]) / denom[:, None]
            elif op == OP_POW:
                reg[k], u1 = _pow_numpy(reg[i1], tape.consts[i2], err)
                if want_grads:
                    dreg[k] = u1[:, None] * dreg[i1]
            elif op == OP_EXP:
                reg[k] = np.exp(reg[i1])
                if want_grads:
                    dreg[k] = reg[k][:, None] * dreg[i1]
            elif op == OP_LOG:
                flag(reg[i1] <= 0.0, ERR_LOG)
                safe = np.where(reg[i1] <= 0.0, 1.0, reg[i1])
                reg[k] = np.log(safe)
                if want_grads:
                    dreg[k] = dreg[i1] / safe[:, None]
            elif op == OP_SQRT:
                v = reg[i1]
                flag(v < 0.0, ERR_SQRT)
                if want_grads:
                    flag(v == 0.0, ERR_SQRT)
                safe = np.where(v <= 0.0, 1.0, v)
                reg[k] = np.where(v < 0.0, np.nan, np.sqrt(np.where(v < 0.0, 0.0, v)))
                if want_grads:
                    dreg[k] = (0.5 / np.sqrt(safe))[:, None] * dreg[i1]
            elif op == OP_NORMSQ:
                reg[k] = np.einsum("ij,ij->i", pts, pts)
                if want_grads:
                    dreg[k] = 2.0 * pts
            else:  # OP_DOT
                c = tape.vecs[i1]
                reg[k] = pts @ c
                if want_grads:
                    dreg[k] = np.broadcast_to(c, (m, n)).copy()

    out = reg[k_regs - 1].copy()
    bad = err != 0
    out[bad] = np.nan
    if want_grads:
        g = dreg[k_regs - 1].copy()
        g[bad] = np.nan
        return out, g, err
    return out, None, err


def _pow_numpy(v: np.ndarray, e: float, err: np.ndarray):
    # constant folding guarantees the tape never holds integer exponents 0 or 1
    ei = int(round(e))
    is_int = abs(e - ei) < 1e-12
    bad = ((v == 0.0) & (ei < 0)) if is_int else (v <= 0.0)
    err[bad & (err == 0)] = ERR_POW
    safe = np.where(bad, 1.0, v)
    if is_int:
        val = safe**ei
        u1 = float(e) * safe ** (ei - 1)
    else:
        val = safe**e
        u1 = e * safe ** (e - 1.0)
    return np.where(bad, np.nan, val), np.where(bad, np.nan, u1)
