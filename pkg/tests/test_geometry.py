import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemfilter import geometry, symb
from riemfilter.diffop import DiffOp, laplace_beltrami
from riemfilter.errors import NonDegeneracyViolation, SingularMetric
from riemfilter.geometry import (
    Chart,
    DiffusionSpec,
    Metric,
    christoffel,
    div,
    grad,
    inner,
    integrate,
    inverse_matrix,
    laplacian,
    metric_from_diffusion,
)


def eq(a, b, chart=None):
    return symb.equal(a, b, chart)


class TestCharts:
    def test_builtin_names(self):
        for name, dim in [("circle", 1), ("torus2", 2), ("sphere2", 2), ("euclidean:3", 3)]:
            assert geometry.chart_by_name(name).dim == dim

    def test_unknown(self):
        with pytest.raises(ValueError):
            geometry.chart_by_name("klein")

    def test_empty_interval(self):
        with pytest.raises(ValueError):
            Chart("bad", ("x",), ((1.0, 1.0),), (False,))

    def test_wrap_and_distance(self):
        c = geometry.circle()
        assert c.wrap(np.array([[2 * math.pi + 0.5]]))[0, 0] == pytest.approx(0.5)
        assert c.distance(np.array([0.1]), np.array([2 * math.pi - 0.1])) == pytest.approx(0.2)

    def test_sphere_samples_avoid_poles(self):
        pts = geometry.sphere2().sample_points(500, 1)
        assert pts[:, 0].min() >= 1e-3 and pts[:, 0].max() <= math.pi - 1e-3


class TestInverse:
    def test_circle(self, circle):
        chart, g = circle
        assert eq(g.inverse[0][0], 1)

    def test_sphere(self, sphere):
        chart, g = sphere
        th = chart.coordinates()[0]
        assert eq(g.inverse[1][1], 1 / symb.sin(th) ** 2, chart)
        assert symb.structurally_zero(g.inverse[0][1])

    def test_generic_2x2(self, torus):
        chart, _ = torus
        inv = inverse_matrix([[2, 1], [1, 2]], chart)
        expected = [[symb.const(2) / 3, symb.const(-1) / 3], [symb.const(-1) / 3, symb.const(2) / 3]]
        for i in range(2):
            for j in range(2):
                assert symb.constant_value(inv[i][j]) == symb.constant_value(expected[i][j])

    def test_symbolic_2x2_residual(self, torus):
        chart, _ = torus
        x, y = chart.coordinates()
        m = [[2 + symb.sin(x), symb.cos(y) / 2], [symb.cos(y) / 2, 2 + symb.cos(x)]]
        inv = inverse_matrix(m, chart)
        for i in range(2):
            for j in range(2):
                s = m[i][0] * inv[0][j] + m[i][1] * inv[1][j]
                assert eq(s, 1 if i == j else 0, chart)

    def test_singular(self, torus):
        chart, _ = torus
        x, _ = chart.coordinates()
        with pytest.raises(SingularMetric):
            inverse_matrix([[symb.sin(x), symb.sin(x)], [symb.sin(x), symb.sin(x)]], chart)

    def test_metric_must_be_positive(self, circle):
        chart, _ = circle
        with pytest.raises(NonDegeneracyViolation):
            Metric([[symb.cos(chart.coordinates()[0])]], chart)


class TestChristoffel:
    def test_flat(self, torus):
        chart, g = torus
        G = christoffel(g)
        assert all(symb.structurally_zero(G[i][j][k]) for i in range(2) for j in range(2) for k in range(2))

    def test_sphere(self, sphere):
        chart, g = sphere
        th = chart.coordinates()[0]
        G = christoffel(g)
        assert eq(G[0][1][1], -symb.sin(th) * symb.cos(th), chart)
        assert eq(G[1][0][1], symb.cos(th) / symb.sin(th), chart)

    def test_symmetry(self, torus):
        chart, _ = torus
        x, y = chart.coordinates()
        g = Metric([[2 + symb.sin(x), symb.cos(x + y) / 3], [symb.cos(x + y) / 3, 2 + symb.sin(y)]], chart)
        G = christoffel(g)
        for i in range(2):
            assert G[i][0][1] == G[i][1][0]


class TestCalculus:
    def test_grad_constant(self, sphere):
        chart, g = sphere
        assert all(symb.structurally_zero(c) for c in grad(symb.const(3), g))

    def test_grad_circle(self, circle):
        chart, g = circle
        th = chart.coordinates()[0]
        assert eq(grad(symb.cos(th), g)[0], -symb.sin(th))

    def test_grad_sphere(self, sphere):
        chart, g = sphere
        th = chart.coordinates()[0]
        gr = grad(symb.cos(th), g)
        assert eq(gr[0], -symb.sin(th), chart) and symb.structurally_zero(gr[1])

    def test_div(self, circle, sphere):
        chart, g = circle
        assert symb.structurally_zero(div([1], g))
        plane = geometry.builtin("euclidean:2")
        px = plane[0].coordinates()[0]
        assert symb.constant_value(div([px, 0], plane[1])) == 1
        chart, g = sphere
        th = chart.coordinates()[0]
        assert eq(div([1, 0], g), symb.cos(th) / symb.sin(th), chart)

    def test_laplacian(self, circle, sphere):
        chart, g = circle
        th = chart.coordinates()[0]
        assert symb.structurally_zero(laplacian(symb.const(2), g))
        assert eq(laplacian(symb.cos(th), g), -symb.cos(th))
        chart, g = sphere
        th = chart.coordinates()[0]
        assert eq(laplacian(symb.cos(th), g), -2 * symb.cos(th), chart)

    def test_laplacian_is_div_grad(self, sphere):
        chart, g = sphere
        th, ph = chart.coordinates()
        f = symb.sin(th) ** 3 * symb.cos(2 * ph) + symb.cos(th)
        assert eq(laplacian(f, g), div(grad(f, g), g), chart)

    def test_inner(self, circle, sphere):
        for chart, g in (circle, sphere):
            th = chart.coordinates()[0]
            gr = grad(symb.cos(th), g)
            assert eq(inner(gr, gr, g), symb.sin(th) ** 2, chart)
            assert symb.structurally_zero(inner(gr, [0] * chart.dim, g))


class TestMetricFromDiffusion:
    def test_identity_plane(self):
        chart, _ = geometry.builtin("euclidean:2")
        x, y = chart.coordinates()
        b = (symb.sin(y), x)
        g, F = metric_from_diffusion(DiffusionSpec.make([[1, 0], [0, 1]], b, chart))
        assert eq(g.matrix[0][0], 1) and symb.structurally_zero(g.matrix[0][1])
        assert eq(F[0], b[0]) and eq(F[1], b[1])

    def test_circle(self, circle):
        chart, _ = circle
        g, F = metric_from_diffusion(DiffusionSpec.make([[1]], [0], chart))
        assert eq(g.matrix[0][0], 1) and symb.structurally_zero(F[0])

    def test_sphere(self, sphere):
        chart, g0 = sphere
        th = chart.coordinates()[0]
        spec = DiffusionSpec.make([[1, 0], [0, 1 / symb.sin(th) ** 2]], [0, 0], chart)
        g, F = metric_from_diffusion(spec)
        assert eq(g.matrix[1][1], symb.sin(th) ** 2, chart)
        half = laplace_beltrami(g).scale(symb.const(1) / 2)
        assert eq(half.coefficient((1, 0)), symb.cos(th) / (2 * symb.sin(th)), chart)
        assert eq(F[0], -symb.cos(th) / (2 * symb.sin(th)), chart)

    def test_nonsymmetric_rejected(self, torus):
        chart, _ = torus
        with pytest.raises(NonDegeneracyViolation):
            metric_from_diffusion(DiffusionSpec.make([[2, 1], [0, 2]], [0, 0], chart))

    def test_indefinite_rejected(self, torus):
        chart, _ = torus
        with pytest.raises(NonDegeneracyViolation):
            metric_from_diffusion(DiffusionSpec.make([[1, 2], [2, 1]], [0, 0], chart))


class TestQuadrature:
    def test_circle(self, circle):
        chart, g = circle
        th = chart.coordinates()[0]
        assert integrate(symb.const(1), g) == pytest.approx(2 * math.pi, abs=1e-12)
        assert abs(integrate(symb.cos(th), g)) < 1e-12

    def test_sphere_area(self, sphere):
        chart, g = sphere
        assert integrate(symb.const(1), g, resolution=64) == pytest.approx(4 * math.pi * math.cos(1e-3), abs=1e-5)

    def test_resolution_floor(self, circle):
        with pytest.raises(ValueError):
            integrate(symb.const(1), circle[1], resolution=4)

    @given(st.integers(1, 4), st.integers(1, 4), st.floats(-2, 2), st.floats(-2, 2))
    def test_divergence_identity(self, k, m, a, b):
        for chart, g in (geometry.builtin("circle"), geometry.builtin("torus2")):
            cs = chart.coordinates()
            f = symb.sin(k * cs[0] + a) * symb.cos(m * cs[-1])
            X = [symb.cos(m * cs[-1]) + b * symb.sin(cs[0])] * chart.dim
            lhs = integrate(sum((X[i] * symb.diff(f, i) for i in range(chart.dim)), symb.const(0)), g, resolution=64)
            rhs = -integrate(div(X, g) * f, g, resolution=64)
            assert abs(lhs - rhs) < 1e-6

    def test_christoffel_symmetry_random(self, torus):
        chart, _ = torus
        x, y = chart.coordinates()
        rng = np.random.default_rng(5)
        for _ in range(3):
            a, b, c = rng.uniform(0.1, 0.4, 3)
            g = Metric([[2 + a * symb.sin(x), b * symb.cos(y)], [b * symb.cos(y), 2 + c * symb.cos(x + y)]], chart)
            G = christoffel(g)
            assert all(G[i][0][1] == G[i][1][0] for i in range(2))


def test_diffusion_generator_convention(torus):
    chart, _ = torus
    spec = DiffusionSpec.make([[2, 1], [1, 4]], [0, 0], chart)
    L = spec.generator()
    assert isinstance(L, DiffOp)
    assert symb.constant_value(L.coefficient((2, 0))) == 1
    assert symb.constant_value(L.coefficient((1, 1))) == 1
    assert symb.constant_value(L.coefficient((0, 2))) == 2
