"""Scalar fields on R^n: a small expression language with exact derivatives.

A :class:`ScalarField` is an immutable expression tree over the grammar

    numbers, x0..x{n-1}, + - * / ^, exp() log() sqrt(), normsq(x), dot(c,x)

where ``^`` takes a real constant exponent and ``c`` is a literal vector.
Every field is C-infinity on its domain and the family is closed under
symbolic differentiation, so quantities like L f = tr Hess f - grad U . grad f
and iterated applications L(Lf) stay first-class fields.

Two independent derivative routes are provided:

* :func:`differentiate` builds the symbolic partial derivative as a new field;
* :func:`eval_jet` propagates truncated Taylor coefficients (value, gradient,
  Hessian, optionally third/fourth order tensors) through the tree, i.e.
  forward-mode AD on jets.

:func:`finite_diff_jet` is a third, deliberately naive route used as a test
oracle only.

Domain policy: evaluating or differentiating past the boundary of a log /
sqrt / fractional power raises :class:`DomainError` instead of propagating
NaN, so downstream infimum searches never chase fake minima.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FieldError",
    "ParseError",
    "DomainError",
    "ScalarField",
    "Jet",
    "ProblemSpec",
    "parse_field",
    "differentiate",
    "eval_jet",
    "finite_diff_jet",
    "const_field",
    "coord_field",
    "normsq_field",
    "dot_field",
]


class FieldError(Exception):
    """Base class for scalar-field errors."""


class ParseError(FieldError):
    """Syntax or semantic error in field source text, with a position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DomainError(FieldError):
    """Evaluation or differentiation left the field's domain."""


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Const(Node):
    c: float


@dataclass(frozen=True)
class Coord(Node):
    i: int


@dataclass(frozen=True)
class Add(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Sub(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Mul(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Div(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Pow(Node):
    a: Node
    expo: float  # real constant exponent


@dataclass(frozen=True)
class Exp(Node):
    a: Node


@dataclass(frozen=True)
class Log(Node):
    a: Node


@dataclass(frozen=True)
class Sqrt(Node):
    a: Node


@dataclass(frozen=True)
class NormSq(Node):
    """Squared Euclidean norm |x|^2 of the coordinate vector."""


@dataclass(frozen=True)
class Dot(Node):
    """Scalar product c . x with a constant vector c."""

    coeffs: tuple[float, ...]


def _is_const(n: Node, value: float | None = None) -> bool:
    if not isinstance(n, Const):
        return False
    return True if value is None else n.c == value


# Smart constructors: constant folding plus 0/1 identities.  No deeper
# canonicalization; equality of fields is checked numerically, not
# symbolically.


def _add(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.c + b.c)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def _sub(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.c - b.c)
    if _is_const(b, 0.0):
        return a
    return Sub(a, b)


def _mul(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.c * b.c)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def _div(a: Node, b: Node) -> Node:
    if isinstance(b, Const):
        if b.c == 0.0:
            raise DomainError("division by constant zero")
        if isinstance(a, Const):
            return Const(a.c / b.c)
        if b.c == 1.0:
            return a
        if _is_const(a, 0.0):
            return Const(0.0)
    return Div(a, b)


def _pow(a: Node, expo: float) -> Node:
    if expo == 1.0:
        return a
    if expo == 0.0:
        return Const(1.0)
    if isinstance(a, Const):
        return Const(_pow_value(a.c, expo))
    return Pow(a, expo)


def _exp(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(math.exp(a.c))
    return Exp(a)


def _log(a: Node) -> Node:
    if isinstance(a, Const):
        if a.c <= 0.0:
            raise DomainError("log of non-positive constant")
        return Const(math.log(a.c))
    return Log(a)


def _sqrt(a: Node) -> Node:
    if isinstance(a, Const):
        if a.c < 0.0:
            raise DomainError("sqrt of negative constant")
        return Const(math.sqrt(a.c))
    return Sqrt(a)


def _as_int_exponent(expo: float) -> int | None:
    r = round(expo)
    return int(r) if abs(expo - r) < 1e-12 else None


def _pow_value(v: float, expo: float) -> float:
    k = _as_int_exponent(expo)
    if v > 0.0:
        return v**expo
    if k is None:
        raise DomainError(f"{v} ^ {expo} with non-integer exponent")
    if v == 0.0 and k < 0:
        raise DomainError("0 raised to a negative power")
    return float(v**k)


# ---------------------------------------------------------------------------
# Jets: truncated Taylor data at a point
# ---------------------------------------------------------------------------


@dataclass
class Jet:
    """Value plus derivative tensors of a field at a point.

    ``order`` is 2, 3 or 4; ``third``/``fourth`` are present only when the
    order calls for them.  All tensors are fully symmetric.
    """

    order: int
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    third: np.ndarray | None = None
    fourth: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]


def _zero_jet(dim: int, order: int, value: float = 0.0) -> Jet:
    return Jet(
        order,
        value,
        np.zeros(dim),
        np.zeros((dim, dim)),
        np.zeros((dim, dim, dim)) if order >= 3 else None,
        np.zeros((dim, dim, dim, dim)) if order >= 4 else None,
    )


def _j_add(a: Jet, b: Jet, sign: float = 1.0) -> Jet:
    return Jet(
        a.order,
        a.value + sign * b.value,
        a.gradient + sign * b.gradient,
        a.hessian + sign * b.hessian,
        None if a.order < 3 else a.third + sign * b.third,
        None if a.order < 4 else a.fourth + sign * b.fourth,
    )


def _sym3_21(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    # sum over placements of a rank-2 block and a rank-1 block on 3 slots
    t = np.einsum("ij,k->ijk", h, g)
    return t + t.transpose(0, 2, 1) + t.transpose(2, 0, 1)


def _sym4_31(t3: np.ndarray, g: np.ndarray) -> np.ndarray:
    # rank-3 block on 3 of 4 slots, rank-1 on the remaining one (4 placements)
    t = np.einsum("ijk,l->ijkl", t3, g)
    return t + t.transpose(0, 1, 3, 2) + t.transpose(0, 3, 1, 2) + t.transpose(3, 0, 1, 2)


def _sym4_22_pairs(ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    # ordered 2+2 placements (6 terms): a_S b_{S^c} over all 2-subsets S
    return (
        np.einsum("ij,kl->ijkl", ha, hb)
        + np.einsum("ik,jl->ijkl", ha, hb)
        + np.einsum("il,jk->ijkl", ha, hb)
        + np.einsum("jk,il->ijkl", ha, hb)
        + np.einsum("jl,ik->ijkl", ha, hb)
        + np.einsum("kl,ij->ijkl", ha, hb)
    )


def _sym4_22_partitions(h: np.ndarray) -> np.ndarray:
    # unordered 2|2 partitions (3 terms) of one symmetric rank-2 block
    return (
        np.einsum("ij,kl->ijkl", h, h)
        + np.einsum("ik,jl->ijkl", h, h)
        + np.einsum("il,jk->ijkl", h, h)
    )


def _sym4_211(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    # 2|1|1 partitions (6 terms): pair block h, singles g g
    t = np.einsum("ij,k,l->ijkl", h, g, g)
    return (
        t
        + t.transpose(0, 2, 1, 3)
        + t.transpose(0, 2, 3, 1)
        + t.transpose(2, 0, 1, 3)
        + t.transpose(2, 0, 3, 1)
        + t.transpose(2, 3, 0, 1)
    )


def _j_mul(a: Jet, b: Jet) -> Jet:
    order = a.order
    value = a.value * b.value
    grad = a.value * b.gradient + b.value * a.gradient
    hess = (
        a.value * b.hessian
        + b.value * a.hessian
        + np.outer(a.gradient, b.gradient)
        + np.outer(b.gradient, a.gradient)
    )
    third = fourth = None
    if order >= 3:
        third = (
            a.value * b.third
            + b.value * a.third
            + _sym3_21(a.hessian, b.gradient)
            + _sym3_21(b.hessian, a.gradient)
        )
    if order >= 4:
        fourth = (
            a.value * b.fourth
            + b.value * a.fourth
            + _sym4_31(a.third, b.gradient)
            + _sym4_31(b.third, a.gradient)
            + _sym4_22_pairs(a.hessian, b.hessian)
        )
    return Jet(order, value, grad, hess, third, fourth)


def _j_compose(u: Sequence[float], a: Jet) -> Jet:
    """Chain rule for a univariate outer map: u = (u(v), u'(v), ...)."""
    order = a.order
    g, h = a.gradient, a.hessian
    value = u[0]
    grad = u[1] * g
    hess = u[2] * np.outer(g, g) + u[1] * h
    third = fourth = None
    if order >= 3:
        third = (
            u[3] * np.einsum("i,j,k->ijk", g, g, g)
            + u[2] * _sym3_21(h, g)
            + u[1] * a.third
        )
    if order >= 4:
        fourth = (
            u[4] * np.einsum("i,j,k,l->ijkl", g, g, g, g)
            + u[3] * _sym4_211(h, g)
            + u[2] * (_sym4_22_partitions(h) + _sym4_31(a.third, g))
            + u[1] * a.fourth
        )
    return Jet(order, value, grad, hess, third, fourth)


def _pow_derivs(v: float, expo: float, order: int) -> list[float]:
    """Derivatives of v^expo up to ``order`` with the hard domain policy."""
    k = _as_int_exponent(expo)
    out: list[float] = []
    if v > 0.0:
        coeff = 1.0
        for m in range(order + 1):
            out.append(coeff * v ** (expo - m))
            coeff *= expo - m
        return out
    if k is None:
        raise DomainError(f"derivatives of v^{expo} need v > 0 (got v = {v})")
    if v == 0.0:
        if k < 0:
            raise DomainError("pole: 0 raised to a negative power")
        # v^k at v = 0: only the k-th derivative survives (= k!)
        for m in range(order + 1):
            out.append(float(math.factorial(k)) if m == k else 0.0)
        return out
    coeff = 1.0
    for m in range(order + 1):
        out.append(coeff * float(v ** (k - m)) if k - m >= 0 or v != 0.0 else 0.0)
        coeff *= k - m
    return out


def _exp_derivs(v: float, order: int) -> list[float]:
    e = math.exp(v)
    return [e] * (order + 1)


def _log_derivs(v: float, order: int) -> list[float]:
    if v <= 0.0:
        raise DomainError(f"log needs a positive argument (got {v})")
    out = [math.log(v)]
    coeff = 1.0
    for m in range(1, order + 1):
        out.append(coeff / v**m)
        coeff *= -m
    return out


def _sqrt_derivs(v: float, order: int) -> list[float]:
    if v <= 0.0:
        raise DomainError(f"sqrt differentiation needs a positive argument (got {v})")
    return _pow_derivs(v, 0.5, order)


# ---------------------------------------------------------------------------
# Recursive evaluation
# ---------------------------------------------------------------------------


def _eval_node(n: Node, x: np.ndarray) -> float:
    if isinstance(n, Const):
        return n.c
    if isinstance(n, Coord):
        return float(x[n.i])
    if isinstance(n, Add):
        return _eval_node(n.a, x) + _eval_node(n.b, x)
    if isinstance(n, Sub):
        return _eval_node(n.a, x) - _eval_node(n.b, x)
    if isinstance(n, Mul):
        return _eval_node(n.a, x) * _eval_node(n.b, x)
    if isinstance(n, Div):
        d = _eval_node(n.b, x)
        if d == 0.0:
            raise DomainError("division by zero")
        return _eval_node(n.a, x) / d
    if isinstance(n, Pow):
        return _pow_value(_eval_node(n.a, x), n.expo)
    if isinstance(n, Exp):
        return math.exp(_eval_node(n.a, x))
    if isinstance(n, Log):
        v = _eval_node(n.a, x)
        if v <= 0.0:
            raise DomainError(f"log of {v}")
        return math.log(v)
    if isinstance(n, Sqrt):
        v = _eval_node(n.a, x)
        if v < 0.0:
            raise DomainError(f"sqrt of {v}")
        return math.sqrt(v)
    if isinstance(n, NormSq):
        return float(np.dot(x, x))
    if isinstance(n, Dot):
        return float(np.dot(np.asarray(n.coeffs), x))
    raise TypeError(f"unknown node {n!r}")


def _jet_node(n: Node, x: np.ndarray, order: int) -> Jet:
    dim = x.shape[0]
    if isinstance(n, Const):
        return _zero_jet(dim, order, n.c)
    if isinstance(n, Coord):
        j = _zero_jet(dim, order, float(x[n.i]))
        j.gradient[n.i] = 1.0
        return j
    if isinstance(n, Add):
        return _j_add(_jet_node(n.a, x, order), _jet_node(n.b, x, order))
    if isinstance(n, Sub):
        return _j_add(_jet_node(n.a, x, order), _jet_node(n.b, x, order), sign=-1.0)
    if isinstance(n, Mul):
        return _j_mul(_jet_node(n.a, x, order), _jet_node(n.b, x, order))
    if isinstance(n, Div):
        b = _jet_node(n.b, x, order)
        if b.value == 0.0:
            raise DomainError("division by zero")
        recip = _pow_derivs(b.value, -1.0, order) if b.value > 0 else None
        if recip is None:
            # negative denominator: 1/v derivatives directly
            recip = [((-1.0) ** m) * math.factorial(m) / b.value ** (m + 1) for m in range(order + 1)]
        return _j_mul(_jet_node(n.a, x, order), _j_compose(recip, b))
    if isinstance(n, Pow):
        a = _jet_node(n.a, x, order)
        return _j_compose(_pow_derivs(a.value, n.expo, order), a)
    if isinstance(n, Exp):
        a = _jet_node(n.a, x, order)
        return _j_compose(_exp_derivs(a.value, order), a)
    if isinstance(n, Log):
        a = _jet_node(n.a, x, order)
        return _j_compose(_log_derivs(a.value, order), a)
    if isinstance(n, Sqrt):
        a = _jet_node(n.a, x, order)
        return _j_compose(_sqrt_derivs(a.value, order), a)
    if isinstance(n, NormSq):
        j = _zero_jet(dim, order, float(np.dot(x, x)))
        j.gradient[:] = 2.0 * x
        j.hessian[:] = 2.0 * np.eye(dim)
        return j
    if isinstance(n, Dot):
        c = np.asarray(n.coeffs, dtype=float)
        j = _zero_jet(dim, order, float(np.dot(c, x)))
        j.gradient[:] = c
        return j
    raise TypeError(f"unknown node {n!r}")


def _diff_node(n: Node, i: int) -> Node:
    if isinstance(n, (Const, Dot, Coord, NormSq)):
        if isinstance(n, Coord):
            return Const(1.0 if n.i == i else 0.0)
        if isinstance(n, Dot):
            return Const(n.coeffs[i])
        if isinstance(n, NormSq):
            return _mul(Const(2.0), Coord(i))
        return Const(0.0)
    if isinstance(n, Add):
        return _add(_diff_node(n.a, i), _diff_node(n.b, i))
    if isinstance(n, Sub):
        return _sub(_diff_node(n.a, i), _diff_node(n.b, i))
    if isinstance(n, Mul):
        return _add(_mul(_diff_node(n.a, i), n.b), _mul(n.a, _diff_node(n.b, i)))
    if isinstance(n, Div):
        num = _sub(_mul(_diff_node(n.a, i), n.b), _mul(n.a, _diff_node(n.b, i)))
        return _div(num, _pow(n.b, 2.0))
    if isinstance(n, Pow):
        inner = _diff_node(n.a, i)
        return _mul(_mul(Const(n.expo), _pow(n.a, n.expo - 1.0)), inner)
    if isinstance(n, Exp):
        return _mul(Exp(n.a), _diff_node(n.a, i))
    if isinstance(n, Log):
        return _div(_diff_node(n.a, i), n.a)
    if isinstance(n, Sqrt):
        return _div(_diff_node(n.a, i), _mul(Const(2.0), Sqrt(n.a)))
    raise TypeError(f"unknown node {n!r}")


# ---------------------------------------------------------------------------
# Pretty printing (round-trips through the parser)
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_num(c: float) -> str:
    return repr(float(c))


def _pp(n: Node, parent: int) -> str:
    if isinstance(n, Const):
        s = _fmt_num(n.c)
        prec = _PREC_UNARY if n.c < 0 else _PREC_ATOM
    elif isinstance(n, Coord):
        s, prec = f"x{n.i}", _PREC_ATOM
    elif isinstance(n, Add):
        s, prec = f"{_pp(n.a, _PREC_ADD)} + {_pp(n.b, _PREC_ADD)}", _PREC_ADD
    elif isinstance(n, Sub):
        s, prec = f"{_pp(n.a, _PREC_ADD)} - {_pp(n.b, _PREC_ADD + 1)}", _PREC_ADD
    elif isinstance(n, Mul):
        s, prec = f"{_pp(n.a, _PREC_MUL)}*{_pp(n.b, _PREC_MUL)}", _PREC_MUL
    elif isinstance(n, Div):
        s, prec = f"{_pp(n.a, _PREC_MUL)}/{_pp(n.b, _PREC_MUL + 1)}", _PREC_MUL
    elif isinstance(n, Pow):
        s, prec = f"{_pp(n.a, _PREC_ATOM)}^{_fmt_num(n.expo)}", _PREC_POW
    elif isinstance(n, Exp):
        s, prec = f"exp({_pp(n.a, 0)})", _PREC_ATOM
    elif isinstance(n, Log):
        s, prec = f"log({_pp(n.a, 0)})", _PREC_ATOM
    elif isinstance(n, Sqrt):
        s, prec = f"sqrt({_pp(n.a, 0)})", _PREC_ATOM
    elif isinstance(n, NormSq):
        s, prec = "normsq(x)", _PREC_ATOM
    elif isinstance(n, Dot):
        vec = ",".join(_fmt_num(c) for c in n.coeffs)
        s, prec = f"dot(({vec}),x)", _PREC_ATOM
    else:
        raise TypeError(f"unknown node {n!r}")
    return f"({s})" if prec < parent else s


# ---------------------------------------------------------------------------
# ScalarField
# ---------------------------------------------------------------------------


class ScalarField:
    """Immutable smooth function R^n -> R.

    Supports arithmetic with other fields of the same dimension and with
    python scalars; ``f ** c`` takes a real constant exponent.  Evaluation is
    pure, so instances are safe to share across workers.
    """

    __slots__ = ("root", "dim", "_tape")

    def __init__(self, root: Node, dim: int):
        if dim <= 0:
            raise ValueError("dim must be positive")
        _check_indices(root, dim)
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_tape", None)

    def __setattr__(self, name, value):  # immutability guard (tape cache excepted)
        if name == "_tape":
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("ScalarField is immutable")

    # -- construction helpers ------------------------------------------------

    def _lift(self, other) -> "ScalarField":
        if isinstance(other, ScalarField):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return ScalarField(Const(float(other)), self.dim)

    def __add__(self, other):
        o = self._lift(other)
        return ScalarField(_add(self.root, o.root), self.dim)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return ScalarField(_sub(self.root, o.root), self.dim)

    def __rsub__(self, other):
        o = self._lift(other)
        return ScalarField(_sub(o.root, self.root), self.dim)

    def __mul__(self, other):
        o = self._lift(other)
        return ScalarField(_mul(self.root, o.root), self.dim)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return ScalarField(_div(self.root, o.root), self.dim)

    def __rtruediv__(self, other):
        o = self._lift(other)
        return ScalarField(_div(o.root, self.root), self.dim)

    def __pow__(self, expo: float):
        return ScalarField(_pow(self.root, float(expo)), self.dim)

    def __neg__(self):
        return ScalarField(_sub(Const(0.0), self.root), self.dim)

    def exp(self) -> "ScalarField":
        return ScalarField(_exp(self.root), self.dim)

    def log(self) -> "ScalarField":
        return ScalarField(_log(self.root), self.dim)

    def sqrt(self) -> "ScalarField":
        return ScalarField(_sqrt(self.root), self.dim)

    # -- evaluation ----------------------------------------------------------

    def value(self, x) -> float:
        x = _as_point(x, self.dim)
        return _eval_node(self.root, x)

    __call__ = value

    def diff(self, i: int) -> "ScalarField":
        if not 0 <= i < self.dim:
            raise ValueError(f"coordinate index {i} out of range for dim {self.dim}")
        return ScalarField(_diff_node(self.root, i), self.dim)

    def jet(self, x, order: int = 2) -> Jet:
        if order not in (2, 3, 4):
            raise ValueError("jet order must be 2, 3 or 4")
        x = _as_point(x, self.dim)
        return _jet_node(self.root, x, order)

    def gradient(self, x) -> np.ndarray:
        return self.jet(x, 2).gradient

    def is_zero(self) -> bool:
        """Structurally the zero field (after constant folding)."""
        return _is_const(self.root, 0.0)

    def to_text(self) -> str:
        return _pp(self.root, 0)

    def __repr__(self) -> str:
        return f"ScalarField({self.to_text()!r}, dim={self.dim})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ScalarField)
            and self.dim == other.dim
            and self.root == other.root
        )

    def __hash__(self) -> int:
        return hash((self.root, self.dim))

    @staticmethod
    def parse(src: str, dim: int) -> "ScalarField":
        return parse_field(src, dim)


def _as_point(x, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise ValueError(f"point has shape {arr.shape}, expected ({dim},)")
    return arr


def _check_indices(n: Node, dim: int) -> None:
    if isinstance(n, Coord) and n.i >= dim:
        raise ValueError(f"coordinate x{n.i} out of range for dim {dim}")
    if isinstance(n, Dot) and len(n.coeffs) != dim:
        raise ValueError(f"dot vector has length {len(n.coeffs)}, expected {dim}")
    for name in ("a", "b"):
        child = getattr(n, name, None)
        if isinstance(child, Node):
            _check_indices(child, dim)


def const_field(c: float, dim: int) -> ScalarField:
    return ScalarField(Const(float(c)), dim)


def coord_field(i: int, dim: int) -> ScalarField:
    return ScalarField(Coord(i), dim)


def normsq_field(dim: int) -> ScalarField:
    return ScalarField(NormSq(), dim)


def dot_field(coeffs: Iterable[float], dim: int | None = None) -> ScalarField:
    c = tuple(float(v) for v in coeffs)
    if dim is None:
        dim = len(c)
    return ScalarField(Dot(c), dim)


# ---------------------------------------------------------------------------
# Spec-level operations
# ---------------------------------------------------------------------------


def parse_field(src: str, dim: int) -> ScalarField:
    """Parse expression text into a :class:`ScalarField` of dimension ``dim``.

    Grammar: numbers, ``x0..x{n-1}``, ``+ - * / ^``, ``exp( ) log( ) sqrt( )``,
    ``normsq(x)``, ``dot((c0,...,ck),x)``; standard precedence, ``^`` binds a
    constant real exponent.  Errors carry the offending source position.
    """
    return _Parser(src, dim).parse()


def differentiate(f: ScalarField, i: int) -> ScalarField:
    """Symbolic partial derivative of ``f`` with respect to ``x_i``."""
    return f.diff(i)


def eval_jet(f: ScalarField, x, order: int = 2) -> Jet:
    """Forward-mode jet (value/gradient/Hessian, optionally 3rd/4th tensors)."""
    return f.jet(x, order)


def finite_diff_jet(f: ScalarField, x, h: float = 1e-5) -> Jet:
    """Central-difference order-2 jet; a slow independent oracle for tests."""
    x = _as_point(x, f.dim)
    n = f.dim
    val = f.value(x)
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        fp, fm = f.value(x + ei), f.value(x - ei)
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * val + fm) / h**2
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            v = (
                f.value(x + ei + ej)
                - f.value(x + ei - ej)
                - f.value(x - ei + ej)
                + f.value(x - ei - ej)
            ) / (4 * h**2)
            hess[i, j] = hess[j, i] = v
    return Jet(2, val, grad, hess)


# ---------------------------------------------------------------------------
# Problem data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """A potential/weight pair defining L = Laplacian - grad U . grad.

    ``W`` is nonnegative by contract (not enforced pointwise).  When
    ``gaussian_U`` is set the potential must be |x|^2/2 plus a constant,
    which unlocks the closed-form Ornstein-Uhlenbeck oracles.
    """

    dim: int
    U: ScalarField
    W: ScalarField
    gaussian_U: bool = False

    def __post_init__(self):
        if self.U.dim != self.dim or self.W.dim != self.dim:
            raise ValueError("U and W must share the problem dimension")
        if self.gaussian_U and not _is_gaussian_potential(self.U.root):
            raise ValueError("gaussian_U set but U is not |x|^2/2 + const")


def _is_half_normsq(n: Node) -> bool:
    if isinstance(n, Div) and isinstance(n.a, NormSq) and _is_const(n.b, 2.0):
        return True
    if isinstance(n, Mul):
        return (_is_const(n.a, 0.5) and isinstance(n.b, NormSq)) or (
            _is_const(n.b, 0.5) and isinstance(n.a, NormSq)
        )
    return False


def _is_gaussian_potential(n: Node) -> bool:
    if _is_half_normsq(n):
        return True
    if isinstance(n, (Add, Sub)):
        return (_is_half_normsq(n.a) and isinstance(n.b, Const)) or (
            isinstance(n.a, Const) and _is_half_normsq(n.b)
        )
    return False


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCS = {"exp", "log", "sqrt"}


class _Parser:
    def __init__(self, src: str, dim: int):
        self.src = src
        self.dim = dim
        self.tokens: list[tuple[str, str, int]] = []
        self.pos = 0
        self._tokenize()

    def _tokenize(self) -> None:
        i = 0
        src = self.src
        while i < len(src):
            m = _TOKEN_RE.match(src, i)
            if m is None or m.end() == i:
                stripped = src[i:].lstrip()
                if not stripped:
                    break
                at = len(src) - len(stripped)
                raise ParseError(f"unexpected character {stripped[0]!r}", at)
            if m.group("num") is not None:
                self.tokens.append(("num", m.group("num"), m.start("num")))
            elif m.group("ident") is not None:
                self.tokens.append(("ident", m.group("ident"), m.start("ident")))
            elif m.group("op") is not None:
                self.tokens.append(("op", m.group("op"), m.start("op")))
            i = m.end()
        if not self.tokens:
            raise ParseError("empty input", 0)

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("eof", "", len(self.src))

    def _next(self):
        tok = self._peek()
        self.pos += 1
        return tok

    def _expect_op(self, op: str):
        kind, text, at = self._next()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}, found {text!r}" if text else f"expected {op!r}", at)

    def parse(self) -> ScalarField:
        node = self._expr()
        kind, text, at = self._peek()
        if kind != "eof":
            raise ParseError(f"unexpected trailing input {text!r}", at)
        return ScalarField(node, self.dim)

    def _expr(self) -> Node:
        node = self._term()
        while True:
            kind, text, _ = self._peek()
            if kind == "op" and text in "+-":
                self._next()
                rhs = self._term()
                node = _add(node, rhs) if text == "+" else _sub(node, rhs)
            else:
                return node

    def _term(self) -> Node:
        node = self._unary()
        while True:
            kind, text, _ = self._peek()
            if kind == "op" and text in "*/":
                self._next()
                rhs = self._unary()
                node = _mul(node, rhs) if text == "*" else _div(node, rhs)
            else:
                return node

    def _unary(self) -> Node:
        kind, text, _ = self._peek()
        if kind == "op" and text == "-":
            self._next()
            return _sub(Const(0.0), self._unary())
        if kind == "op" and text == "+":
            self._next()
            return self._unary()
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        kind, text, at = self._peek()
        if kind == "op" and text == "^":
            self._next()
            expo_at = self._peek()[2]
            expo = self._unary()
            if not isinstance(expo, Const):
                raise ParseError("power exponent must fold to a real constant", expo_at)
            return _pow(base, expo.c)
        return base

    def _atom(self) -> Node:
        kind, text, at = self._next()
        if kind == "num":
            return Const(float(text))
        if kind == "op" and text == "(":
            node = self._expr()
            self._expect_op(")")
            return node
        if kind == "ident":
            return self._ident(text, at)
        raise ParseError(f"unexpected token {text!r}" if text else "unexpected end of input", at)

    def _ident(self, name: str, at: int) -> Node:
        if name in _FUNCS:
            self._expect_op("(")
            arg = self._expr()
            self._expect_op(")")
            return {"exp": _exp, "log": _log, "sqrt": _sqrt}[name](arg)
        if name == "normsq":
            self._expect_op("(")
            self._expect_x()
            self._expect_op(")")
            return NormSq()
        if name == "dot":
            self._expect_op("(")
            coeffs = self._vector()
            self._expect_op(",")
            self._expect_x()
            self._expect_op(")")
            if len(coeffs) != self.dim:
                raise ParseError(
                    f"dot vector has {len(coeffs)} components, expected {self.dim}", at
                )
            return Dot(coeffs)
        m = re.fullmatch(r"x(\d+)", name)
        if m:
            i = int(m.group(1))
            if i >= self.dim:
                raise ParseError(f"coordinate x{i} out of range for dim {self.dim}", at)
            return Coord(i)
        if name == "x":
            raise ParseError("bare 'x' is only valid inside normsq(x) or dot(c,x)", at)
        raise ParseError(f"unknown identifier {name!r}", at)

    def _expect_x(self) -> None:
        kind, text, at = self._next()
        if kind != "ident" or text != "x":
            raise ParseError("expected the coordinate vector 'x'", at)

    def _vector(self) -> tuple[float, ...]:
        self._expect_op("(")
        coeffs: list[float] = []
        while True:
            coeffs.append(self._signed_number())
            kind, text, at = self._next()
            if kind == "op" and text == ")":
                return tuple(coeffs)
            if not (kind == "op" and text == ","):
                raise ParseError("expected ',' or ')' in vector literal", at)

    def _signed_number(self) -> float:
        kind, text, at = self._next()
        sign = 1.0
        if kind == "op" and text in "+-":
            sign = -1.0 if text == "-" else 1.0
            kind, text, at = self._next()
        if kind != "num":
            raise ParseError("expected a number in vector literal", at)
        return sign * float(text)
