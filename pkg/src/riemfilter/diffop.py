"""Differential operators with expression coefficients, in coefficients-left form.

An operator is stored as ``{alpha: c_alpha}`` meaning ``sum c_alpha d^alpha``.
Coefficients that pass :func:`symb.is_zero` are pruned, so the stored
multi-indices determine the order.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Mapping

from . import symb
from .symb import Expr, _from_poly, _padd, _pmul, _pscale, as_expr, diff_multi, poly

ZERO_ORDER = -math.inf


def _binom(alpha, gamma) -> int:
    out = 1
    for a, g in zip(alpha, gamma):
        out *= math.comb(a, g)
    return out


class DiffOp:
    __slots__ = ("chart", "terms")

    def __init__(self, terms: Mapping | Iterable = (), chart=None, prune: bool = True, tol=None):
        if chart is None:
            raise ValueError("DiffOp needs a chart")
        self.chart = chart
        n = chart.dim
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[tuple, dict] = {}
        for alpha, coef in items:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n or any(a < 0 for a in alpha):
                raise ValueError(f"bad multi-index {alpha} for a {n}-dimensional chart")
            acc[alpha] = _padd(acc.get(alpha, {}), poly(as_expr(coef)))
        cleaned = {}
        for alpha in sorted(acc, key=_term_order):
            p = acc[alpha]
            if not p:
                continue
            c = _from_poly(p)
            if prune and symb.is_zero(c, chart, tol):
                continue
            cleaned[alpha] = c
        self.terms = cleaned

    # ---- constructors
    @classmethod
    def zero(cls, chart) -> "DiffOp":
        return cls({}, chart)

    @classmethod
    def multiplication(cls, f, chart) -> "DiffOp":
        return cls({(0,) * chart.dim: f}, chart)

    @classmethod
    def identity(cls, chart) -> "DiffOp":
        return cls.multiplication(1, chart)

    @classmethod
    def partial(cls, i: int, chart, power: int = 1) -> "DiffOp":
        alpha = [0] * chart.dim
        alpha[i] = power
        return cls({tuple(alpha): 1}, chart)

    @classmethod
    def vector_field(cls, X, chart) -> "DiffOp":
        terms = {}
        for i, xi in enumerate(X):
            alpha = [0] * chart.dim
            alpha[i] = 1
            terms[tuple(alpha)] = xi
        return cls(terms, chart)

    # ---- inspection
    def order(self):
        if not self.terms:
            return ZERO_ORDER
        return max(sum(a) for a in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def is_multiplication(self) -> bool:
        return self.order() <= 0

    def coefficient(self, alpha) -> Expr:
        return self.terms.get(tuple(alpha), symb.const(0))

    def part(self, degree: int) -> "DiffOp":
        """Homogeneous piece of the given order."""
        return DiffOp({a: c for a, c in self.terms.items() if sum(a) == degree}, self.chart, prune=False)

    def second_order_matrix(self):
        """Matrix a_ij with degree-2 part equal to 1/2 a_ij d_i d_j."""
        n = self.chart.dim
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                alpha = [0] * n
                alpha[i] += 1
                alpha[j] += 1
                c = self.coefficient(alpha)
                row.append(c * 2 if i == j else c)
            rows.append(row)
        return rows

    def first_order_vector(self):
        n = self.chart.dim
        return tuple(self.coefficient(tuple(1 if k == i else 0 for k in range(n))) for i in range(n))

    # ---- algebra
    def _check(self, other: "DiffOp"):
        if other.chart != self.chart:
            raise ValueError("operators live on different charts")

    def __add__(self, other: "DiffOp") -> "DiffOp":
        self._check(other)
        return DiffOp(itertools.chain(self.terms.items(), other.terms.items()), self.chart)

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        return self + (-other)

    def __neg__(self) -> "DiffOp":
        return DiffOp({a: -c for a, c in self.terms.items()}, self.chart, prune=False)

    def scale(self, factor) -> "DiffOp":
        """Multiply every coefficient on the left by a function or number."""
        f = as_expr(factor)
        return DiffOp({a: c * f for a, c in self.terms.items()}, self.chart)

    def __mul__(self, factor) -> "DiffOp":
        if isinstance(factor, DiffOp):
            return compose(self, factor)
        return self.scale(factor)

    def __rmul__(self, factor) -> "DiffOp":
        return self.scale(factor)

    def __matmul__(self, other: "DiffOp") -> "DiffOp":
        return compose(self, other)

    def apply(self, f) -> Expr:
        return apply(self, f)

    def equals(self, other: "DiffOp", tol=None) -> bool:
        return (self - other).is_zero()

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return self.chart == other.chart and self.terms == other.terms

    __hash__ = None

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"DiffOp({to_string(self)!r})"


def _term_order(alpha):
    return (-sum(alpha), tuple(-a for a in alpha))


def apply(D: DiffOp, f) -> Expr:
    f = as_expr(f)
    p: dict = {}
    for alpha, c in D.terms.items():
        p = _padd(p, _pmul(poly(c), poly(diff_multi(f, alpha))))
    return _from_poly(p)


def _leibniz(A: DiffOp, B: DiffOp) -> dict:
    acc: dict[tuple, dict] = {}
    for alpha, c in A.terms.items():
        pc = poly(c)
        splits = list(itertools.product(*(range(a + 1) for a in alpha)))
        for beta, d in B.terms.items():
            for gamma in splits:
                dd = poly(diff_multi(d, gamma))
                if not dd:
                    continue
                key = tuple(a - g + b for a, g, b in zip(alpha, gamma, beta))
                term = _pscale(_pmul(pc, dd), Fraction(_binom(alpha, gamma)))
                acc[key] = _padd(acc.get(key, {}), term)
    return acc


def compose(A: DiffOp, B: DiffOp, tol=None) -> DiffOp:
    """A o B by the Leibniz rule, in coefficients-left form."""
    A._check(B)
    return DiffOp({k: _from_poly(v) for k, v in _leibniz(A, B).items()}, A.chart, tol=tol)


def commutator(A: DiffOp, B: DiffOp, tol=None) -> DiffOp:
    """[A, B] = AB - BA."""
    A._check(B)
    acc = _leibniz(A, B)
    for k, p in _leibniz(B, A).items():
        acc[k] = _padd(acc.get(k, {}), _pscale(p, Fraction(-1)))
    return DiffOp({k: _from_poly(v) for k, v in acc.items()}, A.chart, tol=tol)


def order(D: DiffOp):
    return D.order()


def adjoint(D: DiffOp, g) -> DiffOp:
    """Formal adjoint with respect to the Riemannian volume of ``g``.

    Uses (1/rho) d_i (rho w) = (d_i + phi_i) w with phi = d log rho, so each
    term c d^alpha maps to (-1)^|alpha| prod_i (d_i + phi_i)^alpha_i o c.
    """
    chart = D.chart
    n = chart.dim
    phi = g.log_density_gradient
    shifted = [DiffOp.partial(i, chart) + DiffOp.multiplication(phi[i], chart) for i in range(n)]
    powers: dict[tuple[int, int], DiffOp] = {}

    def power(i, k):
        if k == 0:
            return DiffOp.identity(chart)
        if (i, k) not in powers:
            powers[(i, k)] = compose(shifted[i], power(i, k - 1))
        return powers[(i, k)]

    total = DiffOp.zero(chart)
    for alpha, c in D.terms.items():
        op = DiffOp.multiplication(c, chart)
        for i in reversed(range(n)):
            if alpha[i]:
                op = compose(power(i, alpha[i]), op)
        if sum(alpha) % 2:
            op = -op
        total = total + op
    return total


def laplace_beltrami(g) -> DiffOp:
    """Laplace-Beltrami operator g^{ij} d_i d_j + (d_j g^{ij} + g^{ij} phi_j) d_i."""
    chart = g.chart
    n = chart.dim
    ginv = g.inverse
    phi = g.log_density_gradient
    terms = []
    for i in range(n):
        for j in range(n):
            alpha = [0] * n
            alpha[i] += 1
            alpha[j] += 1
            terms.append((tuple(alpha), ginv[i][j]))
        first = symb.const(0)
        for j in range(n):
            first = first + symb.diff(ginv[i][j], j) + ginv[i][j] * phi[j]
        alpha = [0] * n
        alpha[i] = 1
        terms.append((tuple(alpha), first))
    return DiffOp(terms, chart)


def _monomial_str(alpha, names) -> str:
    parts = []
    for i, a in enumerate(alpha):
        if a == 1:
            parts.append(f"d_{names[i]}")
        elif a > 1:
            parts.append(f"d_{names[i]}^{a}")
    return "*".join(parts)


def to_string(D: DiffOp) -> str:
    """Deterministic rendering: higher order first, then graded-lex on alpha."""
    if not D.terms:
        return "0"
    names = D.chart.coords
    out = []
    for alpha in sorted(D.terms, key=_term_order):
        coef = symb.to_string(D.terms[alpha], names)
        mono = _monomial_str(alpha, names)
        if not mono:
            out.append(f"({coef})")
        elif coef == "1":
            out.append(mono)
        else:
            out.append(f"({coef})*{mono}")
    return " + ".join(out)
