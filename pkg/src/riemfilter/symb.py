"""A small symbolic expression engine over chart coordinates.

Expressions are immutable trees.  ``simplify`` maps a tree to a normal form:
a sum of monomials with exact rational (or float) coefficients, where each
monomial is a product of integer powers of *atoms*.  Atoms are coordinates,
``sin``/``cos``/``exp``/``log`` of a normalized argument, and non-monomial
sums appearing with negative powers (denominators).  Trigonometric identities
are deliberately not applied; equality is decided numerically by
:func:`is_zero`.
"""

from __future__ import annotations

import functools
import math
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tolerances
from .errors import DomainError, ParseError

ONE = Fraction(1)
ZERO = Fraction(0)


def _coerce_number(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return float(value)
    raise TypeError(f"cannot make a constant from {value!r}")


def as_expr(value) -> "Expr":
    if isinstance(value, Expr):
        return value
    return Constant(value)


class Expr:
    __slots__ = ("_hash", "_poly", "_fn", "_skey", "_free", "_simple", "__weakref__")

    def __init__(self):
        self._hash = None
        self._poly = None
        self._fn = None
        self._skey = None
        self._free = None
        self._simple = False

    # structural identity
    def _args(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other):
            return NotImplemented if not isinstance(other, Expr) else False
        return self._args() == other._args()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((type(self).__name__, self._args()))
        return self._hash

    @property
    def skey(self) -> str:
        """Name-independent structural key, used for canonical ordering."""
        if self._skey is None:
            self._skey = self._make_skey()
        return self._skey

    def free_coordinates(self) -> frozenset[int]:
        if self._free is None:
            self._free = self._make_free()
        return self._free

    def children(self) -> tuple["Expr", ...]:
        return ()

    def _make_free(self):
        out = frozenset()
        for c in self.children():
            out = out | c.free_coordinates()
        return out

    # arithmetic always returns simplified trees
    def __add__(self, other):
        return _from_poly(_padd(poly(self), poly(as_expr(other))))

    def __radd__(self, other):
        return as_expr(other) + self

    def __sub__(self, other):
        return _from_poly(_padd(poly(self), _pscale(poly(as_expr(other)), -ONE)))

    def __rsub__(self, other):
        return as_expr(other) - self

    def __neg__(self):
        return _from_poly(_pscale(poly(self), -ONE))

    def __mul__(self, other):
        return _from_poly(_pmul(poly(self), poly(as_expr(other))))

    def __rmul__(self, other):
        return as_expr(other) * self

    def __truediv__(self, other):
        return _from_poly(_pmul(poly(self), _pinv(poly(as_expr(other)))))

    def __rtruediv__(self, other):
        return as_expr(other) / self

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        return simplify(IntPow(self, int(k)))

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __bool__(self):
        raise TypeError("truth value of an Expr is undefined; use is_zero")


class Constant(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        self.value = _coerce_number(value)

    def _args(self):
        return (self.value,)

    def _make_skey(self):
        return f"#{self.value!r}"


class Coordinate(Expr):
    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str | None = None):
        super().__init__()
        self.index = int(index)
        self.name = name or f"x{index}"

    def _args(self):
        return (self.index,)

    def _make_skey(self):
        return f"c{self.index}"

    def _make_free(self):
        return frozenset((self.index,))


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: Iterable):
        super().__init__()
        self.terms = tuple(as_expr(t) for t in terms)

    def _args(self):
        return self.terms

    def children(self):
        return self.terms

    def _make_skey(self):
        return "+(" + ",".join(t.skey for t in self.terms) + ")"


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: Iterable):
        super().__init__()
        self.factors = tuple(as_expr(f) for f in factors)

    def _args(self):
        return self.factors

    def children(self):
        return self.factors

    def _make_skey(self):
        return "*(" + ",".join(f.skey for f in self.factors) + ")"


class IntPow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent: int):
        super().__init__()
        if int(exponent) != exponent:
            raise ValueError("IntPow needs an integer exponent")
        self.base = as_expr(base)
        self.exponent = int(exponent)

    def _args(self):
        return (self.base, self.exponent)

    def children(self):
        return (self.base,)

    def _make_skey(self):
        return f"^({self.base.skey},{self.exponent})"


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num, den):
        super().__init__()
        self.num = as_expr(num)
        self.den = as_expr(den)

    def _args(self):
        return (self.num, self.den)

    def children(self):
        return (self.num, self.den)

    def _make_skey(self):
        return f"/({self.num.skey},{self.den.skey})"


class Func(Expr):
    __slots__ = ("arg",)
    name = "?"

    def __init__(self, arg):
        super().__init__()
        self.arg = as_expr(arg)

    def _args(self):
        return (self.arg,)

    def children(self):
        return (self.arg,)

    def _make_skey(self):
        return f"{self.name}({self.arg.skey})"


class Sin(Func):
    __slots__ = ()
    name = "sin"


class Cos(Func):
    __slots__ = ()
    name = "cos"


class Exp(Func):
    __slots__ = ()
    name = "exp"


class Log(Func):
    __slots__ = ()
    name = "log"


FUNCTIONS = {"sin": Sin, "cos": Cos, "exp": Exp, "log": Log}


# ---------------------------------------------------------------------------
# polynomial normal form
#
# A poly is a dict {monomial: coefficient}; a monomial is a tuple of
# (atom, nonzero int power) pairs sorted by atom.skey.


def _mono_from(d: dict) -> tuple:
    return tuple(sorted(((a, k) for a, k in d.items() if k != 0), key=lambda ak: ak[0].skey))


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, k in m2:
        d[a] = d.get(a, 0) + k
    return _mono_from(d)


def _clean(p: dict) -> dict:
    return {m: c for m, c in p.items() if c != 0}


def _padd(p: dict, q: dict) -> dict:
    out = dict(p)
    for m, c in q.items():
        out[m] = out.get(m, ZERO) + c
    return _clean(out)


def _pscale(p: dict, c) -> dict:
    if c == 0:
        return {}
    return {m: v * c for m, v in p.items()}


def _pmul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            out[m] = out.get(m, ZERO) + c1 * c2
    return _clean(out)


def _ppow(p: dict, k: int) -> dict:
    if k < 0:
        return _ppow(_pinv(p), -k)
    result = {(): ONE}
    base = p
    while k:
        if k & 1:
            result = _pmul(result, base)
        k >>= 1
        if k:
            base = _pmul(base, base)
    return result


def _leading(p: dict):
    m = min(p, key=_mono_key)
    return m, p[m]


def _pinv(p: dict) -> dict:
    if not p:
        raise DomainError("division by an identically zero expression")
    if len(p) == 1:
        (m, c), = p.items()
        return {tuple((a, -k) for a, k in m): 1 / c if isinstance(c, float) else ONE / c}
    _, c0 = _leading(p)
    inv_c0 = 1 / c0 if isinstance(c0, float) else ONE / c0
    normalized = _pscale(p, inv_c0)
    atom = _from_poly(normalized)
    return {((atom, -1),): inv_c0}


def _mono_key(m: tuple):
    return (sum(abs(k) for _, k in m), tuple((a.skey, k) for a, k in m))


def _is_const_poly(p: dict) -> bool:
    return all(m == () for m in p)


def _const_value(p: dict):
    return p.get((), ZERO)


def _fold(fn: Callable[[float], float], value):
    try:
        return float(fn(float(value)))
    except (ValueError, OverflowError) as exc:
        raise DomainError(str(exc)) from exc


def _func_poly(cls, arg: "Expr") -> dict:
    a = poly(arg)
    if cls is Exp:
        out = {(): ONE}
        for m, c in a.items():
            if m == ():
                if c != 0:
                    out = _pscale(out, _fold(math.exp, c))
                continue
            if isinstance(c, Fraction) and c.denominator == 1:
                atom, power = Exp(_from_poly({m: ONE})), int(c)
            elif isinstance(c, float) and c.is_integer():
                atom, power = Exp(_from_poly({m: ONE})), int(c)
            elif c < 0:
                atom, power = Exp(_from_poly({m: -c})), -1
            else:
                atom, power = Exp(_from_poly({m: c})), 1
            atom._simple = True
            out = _pmul(out, {((atom, power),): ONE})
        return out
    if _is_const_poly(a):
        v = _const_value(a)
        if cls is Log:
            if v == 1:
                return {}
            if v <= 0:
                atom = Log(_from_poly(a))
                return {((atom, 1),): ONE}
            return {(): _fold(math.log, v)}
        if v == 0:
            return {(): ONE} if cls is Cos else {}
        fn = {Sin: math.sin, Cos: math.cos}[cls]
        return {(): _fold(fn, v)}
    sign = ONE
    if cls in (Sin, Cos):
        _, c0 = _leading(a)
        if c0 < 0:
            a = _pscale(a, -ONE)
            if cls is Sin:
                sign = -ONE
    atom = cls(_from_poly(a))
    atom._simple = True
    return {((atom, 1),): sign}


def poly(e: Expr) -> dict:
    """Normal-form dictionary of ``e`` (cached on the node)."""
    if e._poly is not None:
        return e._poly
    t = type(e)
    if t is Constant:
        p = {} if e.value == 0 else {(): e.value}
    elif t is Coordinate:
        p = {((e, 1),): ONE}
    elif t is Add:
        p = {}
        for term in e.terms:
            p = _padd(p, poly(term))
    elif t is Mul:
        p = {(): ONE}
        for f in e.factors:
            p = _pmul(p, poly(f))
            if not p:
                break
    elif t is IntPow:
        bp = poly(e.base)
        if e._simple and e.exponent < 0 and len(bp) > 1:
            p = {((e.base, e.exponent),): ONE}
        else:
            p = _ppow(bp, e.exponent)
    elif t is Div:
        p = _pmul(poly(e.num), _pinv(poly(e.den)))
    elif isinstance(e, Func):
        p = _func_poly(t, simplify(e.arg))
    else:
        raise TypeError(f"unknown node {t}")
    e._poly = p
    return p


def _from_poly(p: dict) -> Expr:
    if not p:
        out = Constant(0)
        out._poly = {}
        out._simple = True
        return out
    terms = []
    for m in sorted(p, key=_mono_key):
        c = p[m]
        factors = []
        for atom, k in m:
            if k == 1:
                factors.append(atom)
            else:
                f = IntPow(atom, k)
                f._simple = True
                factors.append(f)
        if not factors:
            term = Constant(c)
        elif c == 1:
            term = factors[0] if len(factors) == 1 else Mul(factors)
        else:
            term = Mul([Constant(c), *factors])
        term._simple = True
        terms.append(term)
    out = terms[0] if len(terms) == 1 else Add(terms)
    if len(terms) > 1:
        out._simple = True
    out._poly = p
    return out


def simplify(e: Expr) -> Expr:
    """Return the normal form of ``e``; idempotent."""
    e = as_expr(e)
    if e._simple:
        return e
    out = _from_poly(poly(e))
    out._simple = True
    return out


# ---------------------------------------------------------------------------
# differentiation


def _atom_derivative(atom: Expr, i: int) -> dict:
    if i not in atom.free_coordinates():
        return {}
    t = type(atom)
    if t is Coordinate:
        return {(): ONE}
    if t is Sin:
        return _pmul(poly(simplify(Cos(atom.arg))), _pdiff(poly(atom.arg), i))
    if t is Cos:
        return _pscale(_pmul(poly(simplify(Sin(atom.arg))), _pdiff(poly(atom.arg), i)), -ONE)
    if t is Exp:
        return _pmul({((atom, 1),): ONE}, _pdiff(poly(atom.arg), i))
    if t is Log:
        return _pmul(_pdiff(poly(atom.arg), i), _pinv(poly(atom.arg)))
    # non-monomial sum atom (appears with negative powers)
    return _pdiff(poly(atom), i)


def _pdiff(p: dict, i: int) -> dict:
    out: dict = {}
    for m, c in p.items():
        for idx, (atom, k) in enumerate(m):
            if i not in atom.free_coordinates():
                continue
            da = _atom_derivative(atom, i)
            if not da:
                continue
            rest = dict(m)
            rest[atom] = k - 1
            base = {_mono_from(rest): c * k}
            out = _padd(out, _pmul(base, da))
    return out


@functools.lru_cache(maxsize=200_000)
def diff(e: Expr, i: int) -> Expr:
    """Exact partial derivative with respect to coordinate ``i``, simplified."""
    if i not in e.free_coordinates():
        return Constant(0)
    return _from_poly(_pdiff(poly(e), i))


def diff_multi(e: Expr, alpha: Sequence[int]) -> Expr:
    """Mixed partial derivative for a multi-index ``alpha``."""
    return _diff_multi(e, tuple(alpha))


@functools.lru_cache(maxsize=200_000)
def _diff_multi(e: Expr, alpha: tuple) -> Expr:
    if not any(alpha):
        return simplify(e)
    i = next(k for k, a in enumerate(alpha) if a)
    lower = list(alpha)
    lower[i] -= 1
    return diff(_diff_multi(e, tuple(lower)), i)


def is_constant(e: Expr) -> bool:
    return not simplify(e).free_coordinates()


def constant_value(e: Expr):
    s = simplify(e)
    p = poly(s)
    if not _is_const_poly(p):
        raise ValueError(f"{s} is not constant")
    return _const_value(p)


def structurally_zero(e: Expr) -> bool:
    return not poly(e)


def terms(e: Expr) -> tuple[Expr, ...]:
    """Top-level summands of the normal form."""
    s = simplify(e)
    return s.terms if isinstance(s, Add) else (s,)


def substitute(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Replace coordinates by expressions."""
    t = type(e)
    if t is Coordinate:
        return mapping.get(e.index, e)
    if t is Constant:
        return e
    if t is Add:
        return simplify(Add([substitute(c, mapping) for c in e.terms]))
    if t is Mul:
        return simplify(Mul([substitute(c, mapping) for c in e.factors]))
    if t is IntPow:
        return simplify(IntPow(substitute(e.base, mapping), e.exponent))
    if t is Div:
        return simplify(Div(substitute(e.num, mapping), substitute(e.den, mapping)))
    return simplify(type(e)(substitute(e.arg, mapping)))


# ---------------------------------------------------------------------------
# numeric evaluation

def _compile(e: Expr) -> Callable:
    if e._fn is not None:
        return e._fn
    t = type(e)
    if t is Constant:
        v = float(e.value)
        fn = lambda X: v  # noqa: E731
    elif t is Coordinate:
        i = e.index
        fn = lambda X: X[i]  # noqa: E731
    elif t is Add:
        parts = [_compile(c) for c in e.terms]

        def fn(X, parts=parts):
            total = parts[0](X)
            for f in parts[1:]:
                total = total + f(X)
            return total
    elif t is Mul:
        parts = [_compile(c) for c in e.factors]

        def fn(X, parts=parts):
            total = parts[0](X)
            for f in parts[1:]:
                total = total * f(X)
            return total
    elif t is IntPow:
        base, k = _compile(e.base), e.exponent
        if k >= 0:
            fn = lambda X: base(X) ** k  # noqa: E731
        else:
            fn = lambda X: 1.0 / (base(X) ** (-k))  # noqa: E731
    elif t is Div:
        num, den = _compile(e.num), _compile(e.den)
        fn = lambda X: num(X) / den(X)  # noqa: E731
    else:
        arg = _compile(e.arg)
        ufunc = {Sin: np.sin, Cos: np.cos, Exp: np.exp, Log: np.log}[t]
        fn = lambda X: ufunc(arg(X))  # noqa: E731
    e._fn = fn
    return fn


def evaluate(e: Expr, coords) -> np.ndarray:
    """Vectorized evaluation; ``coords`` is a sequence of arrays, one per coordinate.

    Non-finite results (poles, log of non-positive numbers) come back as
    inf/nan instead of raising.
    """
    e = as_expr(e)
    X = [np.asarray(c, dtype=float) for c in coords]
    shape = np.broadcast_shapes(*(x.shape for x in X)) if X else ()
    with np.errstate(all="ignore"):
        out = _compile(e)(X)
    return np.broadcast_to(np.asarray(out, dtype=float), shape)


def eval_at(e: Expr, point: Sequence[float]) -> float:
    """IEEE double value of ``e`` at a single point."""
    X = [np.float64(v) for v in point]
    with np.errstate(all="ignore"):
        value = float(_compile(as_expr(e))(X))
    if not math.isfinite(value):
        raise DomainError(f"{to_string(e)} is not finite at {tuple(point)}")
    return value


def magnitude(e: Expr, coords) -> np.ndarray:
    """Sum of absolute values of the normal-form summands (cancellation scale)."""
    total = 0.0
    for t in terms(e):
        total = total + np.abs(evaluate(t, coords))
    return total


def _default_points(dim: int, n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.uniform(0.1, 1.9, size=(n, max(dim, 1)))


def zero_test_points(chart, n: int, seed: int, dim: int = 1) -> np.ndarray:
    if chart is None:
        return _default_points(dim, n, seed)
    return chart.sample_points(n, seed)


def is_zero(e: Expr, chart=None, tol: tolerances.Tolerances | None = None) -> bool:
    """Probabilistic test that ``e`` vanishes identically on the chart interior.

    Exact structural zeros short-circuit.  Otherwise ``e`` is evaluated at
    ``n_zero`` points drawn from a fixed random stream; it is declared zero
    when ``|e| <= tau_zero * max(1, scale)`` at every point, where ``scale``
    is the sum of the magnitudes of its summands.  A false positive requires
    a nonzero analytic function to nearly vanish at every sample point.
    """
    e = simplify(e)
    if not poly(e):
        return True
    free = e.free_coordinates()
    if not free:
        return abs(float(constant_value(e))) <= resolve_tol(tol).tau_zero
    tol = resolve_tol(tol)
    dim = max(free) + 1
    pts = zero_test_points(chart, tol.n_zero, tol.zero_seed, dim)
    coords = [pts[:, k] for k in range(pts.shape[1])]
    values = evaluate(e, coords)
    scale = magnitude(e, coords)
    ok = np.isfinite(values) & np.isfinite(scale)
    if ok.sum() < max(1, len(values) // 2):
        return False
    return bool(np.all(np.abs(values[ok]) <= tol.tau_zero * np.maximum(1.0, scale[ok])))


def resolve_tol(tol):
    return tolerances.resolve(tol)


def equal(a, b, chart=None, tol=None) -> bool:
    return is_zero(as_expr(a) - as_expr(b), chart, tol)


# ---------------------------------------------------------------------------
# printing

def _const_str(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))


def _prec(e: Expr) -> int:
    t = type(e)
    if t is Add:
        return 1
    if t in (Mul, Div):
        return 2
    if t is Constant and (_const_str(e.value).startswith("-") or "/" in _const_str(e.value)):
        return 2
    if t is IntPow:
        return 3
    return 4


def _wrap(e: Expr, level: int, names) -> str:
    s = to_string(e, names)
    return f"({s})" if _prec(e) < level else s


def to_string(e: Expr, names: Sequence[str] | None = None) -> str:
    t = type(e)
    if t is Constant:
        return _const_str(e.value)
    if t is Coordinate:
        if names is not None and e.index < len(names):
            return names[e.index]
        return e.name
    if t is Add:
        out = to_string(e.terms[0], names)
        for term in e.terms[1:]:
            s = to_string(term, names)
            if s.startswith("-"):
                out += " - " + s[1:]
            else:
                out += " + " + s
        return out
    if t is Mul:
        fs = list(e.factors)
        prefix = ""
        if type(fs[0]) is Constant and fs[0].value == -1 and len(fs) > 1:
            prefix = "-"
            fs = fs[1:]
        parts = []
        for i, f in enumerate(fs):
            if i == 0 and type(f) is Constant:
                parts.append(_const_str(f.value))
            else:
                parts.append(_wrap(f, 3, names))
        return prefix + "*".join(parts)
    if t is IntPow:
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{_wrap(e.base, 4, names)}^{exp}"
    if t is Div:
        return f"{_wrap(e.num, 2, names)}/{_wrap(e.den, 3, names)}"
    return f"{e.name}({to_string(e.arg, names)})"


# ---------------------------------------------------------------------------
# parsing

_MACROS = {"tan", "tanh", "sinh", "cosh", "sec", "sech"}


def _expand_macro(name: str, a: Expr) -> Expr:
    if name == "tan":
        return Div(Sin(a), Cos(a))
    ep, em = Exp(a), Exp(Mul([Constant(-1), a]))
    if name == "sinh":
        return Mul([Constant(Fraction(1, 2)), Add([ep, Mul([Constant(-1), em])])])
    if name == "cosh":
        return Mul([Constant(Fraction(1, 2)), Add([ep, em])])
    if name == "tanh":
        return Div(Add([ep, Mul([Constant(-1), em])]), Add([ep, em]))
    if name == "sec":
        return Div(Constant(1), Cos(a))
    if name == "sech":
        return Div(Constant(2), Add([ep, em]))
    raise ParseError(f"unknown function {name}")


class _Parser:
    def __init__(self, text: str, coords: Sequence[str]):
        self.text = text
        self.coords = {name: i for i, name in enumerate(coords)}
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text):
        import re

        spec = r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))"
        pos, out = 0, []
        text = text.rstrip()
        while pos < len(text):
            m = re.compile(spec).match(text, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character at {pos} in {text!r}")
            num, name, op = m.groups()
            if num is not None:
                out.append(("num", num))
            elif name is not None:
                out.append(("name", name))
            else:
                out.append(("op", "^" if op == "**" else op))
            pos = m.end()
        return out

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ParseError(f"expected {value or 'token'} in {self.text!r}")
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression")
        e = self.expr()
        if self.pos != len(self.tokens):
            raise ParseError(f"trailing input {self.tokens[self.pos][1]!r} in {self.text!r}")
        return e

    def expr(self):
        terms = [self.term()]
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else Mul([Constant(-1), t]))
        return terms[0] if len(terms) == 1 else Add(terms)

    def term(self):
        e = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            e = Mul([e, rhs]) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return Mul([Constant(-1), self.unary()])
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            exponent = simplify(self.unary())
            if not is_constant(exponent):
                raise ParseError("exponents must be integer constants")
            k = constant_value(exponent)
            if float(k) != int(float(k)):
                raise ParseError(f"non-integer exponent {k} is not supported")
            return IntPow(base, int(float(k)))
        return base

    def atom(self):
        kind, value = self.take()
        if kind == "num":
            return Constant(Fraction(value))
        if kind == "op" and value == "(":
            e = self.expr()
            self.take(")")
            return e
        if kind == "name":
            if self.peek() == ("op", "("):
                self.take("(")
                arg = self.expr()
                self.take(")")
                if value in FUNCTIONS:
                    return FUNCTIONS[value](arg)
                if value in _MACROS:
                    return _expand_macro(value, arg)
                raise ParseError(f"unknown function {value!r}")
            if value in self.coords:
                return Coordinate(self.coords[value], value)
            if value == "pi":
                return Constant(math.pi)
            if value == "e":
                return Constant(math.e)
            raise ParseError(f"unknown symbol {value!r}; coordinates are {sorted(self.coords)}")
        raise ParseError(f"unexpected token {value!r} in {self.text!r}")


def parse(text: str, coords: Sequence[str], simplified: bool = True) -> Expr:
    """Parse infix text such as ``"sin(theta)^2 + 2*x"`` over named coordinates."""
    tree = _Parser(str(text), coords).parse()
    return simplify(tree) if simplified else tree


def coordinates(names: Sequence[str]) -> tuple[Coordinate, ...]:
    return tuple(Coordinate(i, n) for i, n in enumerate(names))


def sin(e) -> Expr:
    return simplify(Sin(as_expr(e)))


def cos(e) -> Expr:
    return simplify(Cos(as_expr(e)))


def exp(e) -> Expr:
    return simplify(Exp(as_expr(e)))


def log(e) -> Expr:
    return simplify(Log(as_expr(e)))


def const(value) -> Expr:
    return simplify(Constant(value))
