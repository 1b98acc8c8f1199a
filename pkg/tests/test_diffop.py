import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemfilter import geometry, symb
from riemfilter.diffop import (
    ZERO_ORDER,
    DiffOp,
    adjoint,
    commutator,
    compose,
    laplace_beltrami,
    to_string,
)
from riemfilter.geometry import integrate

HALF = symb.const(1) / 2
CIRCLE, CIRCLE_G = geometry.builtin("circle")
TH = CIRCLE.coordinates()[0]
LINE, LINE_G = geometry.builtin("euclidean:1")
X = LINE.coordinates()[0]


def d(chart, i=0, k=1):
    return DiffOp.partial(i, chart, k)


def mul(f, chart):
    return DiffOp.multiplication(f, chart)


def same(A, B):
    return (A - B).is_zero()


def random_op(chart, rng, order=2):
    """Random operator with trigonometric-polynomial coefficients on a periodic chart."""
    cs = chart.coordinates()
    n = chart.dim
    terms = {}
    for alpha in np.ndindex(*([order + 1] * n)):
        if sum(alpha) > order:
            continue
        a, b, k = rng.uniform(-1, 1), rng.uniform(-1, 1), int(rng.integers(0, 3))
        coef = a * symb.cos(k * cs[0]) + b * symb.sin(cs[-1])
        terms[tuple(int(v) for v in alpha)] = coef
    return DiffOp(terms, chart)


class TestApply:
    def test_partial(self):
        assert symb.equal(d(CIRCLE).apply(symb.cos(TH)), -symb.sin(TH))

    def test_multiplication(self):
        f = symb.sin(X) + X**2
        assert symb.equal(mul(X, LINE).apply(f), X * f)

    def test_on_constant(self):
        L0 = d(CIRCLE, k=2).scale(HALF) - mul(HALF * symb.cos(TH) ** 2, CIRCLE)
        assert symb.equal(L0.apply(1), -HALF * symb.cos(TH) ** 2)


class TestCompose:
    def test_product_rule(self):
        assert same(compose(d(LINE), mul(X, LINE)), mul(X, LINE) * d(LINE) + DiffOp.identity(LINE))

    def test_left_multiplication(self):
        assert same(compose(mul(X, LINE), d(LINE)), d(LINE).scale(X))

    def test_second_order(self):
        got = compose(d(CIRCLE, k=2), mul(symb.sin(TH), CIRCLE))
        want = d(CIRCLE, k=2).scale(symb.sin(TH)) + d(CIRCLE).scale(2 * symb.cos(TH)) - mul(symb.sin(TH), CIRCLE)
        assert same(got, want)
        f = symb.exp(symb.cos(TH)) + symb.sin(3 * TH)
        nested = d(CIRCLE, k=2).apply(symb.sin(TH) * f)
        pts = np.linspace(0.1, 6.0, 17)
        assert np.allclose(symb.evaluate(got.apply(f), [pts]), symb.evaluate(nested, [pts]), atol=1e-9)

    def test_nested_apply_random(self):
        rng = np.random.default_rng(2)
        f = symb.cos(2 * TH) * symb.exp(symb.sin(TH))
        pts = np.linspace(0.05, 6.2, 23)
        for _ in range(4):
            A, B = random_op(CIRCLE, rng), random_op(CIRCLE, rng)
            lhs = symb.evaluate(compose(A, B).apply(f), [pts])
            rhs = symb.evaluate(A.apply(B.apply(f)), [pts])
            assert np.max(np.abs(lhs - rhs)) < 1e-9
            assert compose(A, B).order() <= A.order() + B.order()


class TestCommutator:
    def test_canonical_pair(self):
        assert same(commutator(d(LINE), mul(X, LINE)), DiffOp.identity(LINE))

    def test_oscillator(self):
        L0 = d(LINE, k=2).scale(HALF) - mul(HALF * X**2, LINE)
        assert same(commutator(L0, mul(X, LINE)), d(LINE))

    def test_half_laplacian_cos(self):
        half = laplace_beltrami(CIRCLE_G).scale(HALF)
        got = commutator(half, mul(symb.cos(TH), CIRCLE))
        want = d(CIRCLE).scale(-symb.sin(TH)) - mul(HALF * symb.cos(TH), CIRCLE)
        assert same(got, want)
        assert to_string(got) == "(-sin(theta))*d_theta + (-1/2*cos(theta))"

    def test_multiplications_commute(self):
        assert commutator(mul(symb.sin(TH), CIRCLE), mul(symb.exp(symb.cos(TH)), CIRCLE)).is_zero()

    def test_antisymmetric(self):
        rng = np.random.default_rng(4)
        A, B = random_op(CIRCLE, rng), random_op(CIRCLE, rng)
        assert same(commutator(A, B), -commutator(B, A))


class TestOrder:
    def test_zero_sentinel(self):
        assert DiffOp.zero(CIRCLE).order() == ZERO_ORDER

    def test_mixed(self):
        assert (d(LINE, k=2).scale(X) + d(LINE)).order() == 2

    def test_commutator_order(self):
        assert commutator(d(LINE), mul(X, LINE)).order() == 0

    def test_pruning(self):
        D = DiffOp({(1,): symb.sin(TH) ** 2 + symb.cos(TH) ** 2 - 1, (0,): 1}, CIRCLE)
        assert D.order() == 0


class TestAdjoint:
    def test_partial(self):
        assert same(adjoint(d(CIRCLE), CIRCLE_G), -d(CIRCLE))

    def test_multiplication(self):
        f = mul(symb.cos(TH) ** 3, CIRCLE)
        assert same(adjoint(f, CIRCLE_G), f)

    @pytest.mark.parametrize("name", ["circle", "sphere2"])
    def test_half_laplacian_self_adjoint(self, name):
        chart, g = geometry.builtin(name)
        half = laplace_beltrami(g).scale(HALF)
        assert same(adjoint(half, g), half)

    def test_involution(self):
        rng = np.random.default_rng(8)
        chart, g = geometry.builtin("sphere2")
        for _ in range(2):
            D = random_op(chart, rng)
            assert same(adjoint(adjoint(D, g), g), D)

    def test_integration_by_parts_circle(self):
        D = d(CIRCLE).scale(symb.sin(TH)) + d(CIRCLE, k=2).scale(symb.cos(TH))
        u = symb.exp(symb.sin(TH))
        v = symb.cos(2 * TH) + symb.sin(TH)
        lhs = integrate(D.apply(u) * v, CIRCLE_G, resolution=128)
        rhs = integrate(u * adjoint(D, CIRCLE_G).apply(v), CIRCLE_G, resolution=128)
        assert abs(lhs - rhs) < 1e-6


class TestProperties:
    @given(st.integers(0, 10**6))
    def test_jacobi(self, seed):
        rng = np.random.default_rng(seed)
        A, B, C = (random_op(CIRCLE, rng) for _ in range(3))
        J = commutator(commutator(A, B), C) + commutator(commutator(B, C), A) + commutator(commutator(C, A), B)
        assert J.is_zero()

    @given(st.integers(0, 10**6), st.integers(0, 2), st.integers(0, 2))
    def test_graded_bounds(self, seed, p, q):
        chart = geometry.torus2()
        rng = np.random.default_rng(seed)
        A, B = random_op(chart, rng, p), random_op(chart, rng, q)
        assert (A + B).order() <= max(A.order(), B.order())
        assert compose(A, B).order() <= A.order() + B.order()
        C = commutator(A, B)
        if not C.is_zero():
            assert C.order() <= A.order() + B.order() - 1

    def test_printer_is_deterministic(self):
        D = d(CIRCLE, k=2).scale(HALF) + mul(symb.cos(TH), CIRCLE) + d(CIRCLE).scale(symb.sin(TH))
        assert to_string(D) == "(1/2)*d_theta^2 + (sin(theta))*d_theta + (cos(theta))"


def test_operators_on_different_charts_rejected():
    with pytest.raises(ValueError):
        d(CIRCLE) + d(LINE)


def test_sphere_laplace_beltrami_matches_geometry():
    chart, g = geometry.builtin("sphere2")
    th, ph = chart.coordinates()
    f = symb.sin(th) ** 2 * symb.cos(ph) + symb.cos(th) ** 3
    assert symb.equal(laplace_beltrami(g).apply(f), geometry.laplacian(f, g), chart)
    assert math.isfinite(integrate(f, g))
