"""Riemannian structures on a single coordinate chart."""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import symb, tolerances
from .errors import NonDegeneracyViolation, SingularMetric
from .symb import Expr, as_expr, diff, is_zero, simplify

Matrix = tuple[tuple[Expr, ...], ...]
VectorField = tuple[Expr, ...]


@dataclasses.dataclass(frozen=True)
class Chart:
    name: str
    coords: tuple[str, ...]
    box: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]
    margin: float = 0.0
    compact: bool = False

    def __post_init__(self):
        if len(self.coords) < 1:
            raise ValueError("a chart needs at least one coordinate")
        if not (len(self.coords) == len(self.box) == len(self.periodic)):
            raise ValueError("coords, box and periodic must have equal length")
        for lo, hi in self.box:
            if not hi > lo:
                raise ValueError(f"empty interval ({lo}, {hi})")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def coordinates(self) -> tuple[symb.Coordinate, ...]:
        return symb.coordinates(self.coords)

    def parse(self, text: str) -> Expr:
        return symb.parse(text, self.coords)

    def interior_box(self) -> tuple[tuple[float, float], ...]:
        """Domain with the excluded margin removed from non-periodic axes."""
        return tuple(
            (lo, hi) if per else (lo + self.margin, hi - self.margin)
            for (lo, hi), per in zip(self.box, self.periodic)
        )

    def sample_points(self, n: int, seed: int) -> np.ndarray:
        return _sample_points(self, n, seed)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        pts = np.array(points, dtype=float, copy=True)
        for k, ((lo, hi), per) in enumerate(zip(self.box, self.periodic)):
            if per:
                pts[..., k] = lo + np.mod(pts[..., k] - lo, hi - lo)
        return pts

    def inside(self, points: np.ndarray, shrink: bool = True) -> np.ndarray:
        """Mask of points inside the (optionally margin-shrunk) box on non-periodic axes."""
        pts = np.atleast_2d(points)
        box = self.interior_box() if shrink else self.box
        ok = np.ones(pts.shape[0], dtype=bool)
        for k, ((lo, hi), per) in enumerate(zip(box, self.periodic)):
            if not per:
                ok &= (pts[:, k] >= lo) & (pts[:, k] <= hi)
        return ok

    def displacement(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """q - p with periodic axes reduced to the shortest representative."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        for k, ((lo, hi), per) in enumerate(zip(self.box, self.periodic)):
            if per:
                L = hi - lo
                d[..., k] = (d[..., k] + L / 2) % L - L / 2
        return d

    def distance(self, p, q) -> np.ndarray:
        return np.linalg.norm(self.displacement(p, q), axis=-1)


@functools.lru_cache(maxsize=64)
def _sample_points(chart: Chart, n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    box = chart.interior_box()
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = rng.uniform(lo, hi, size=(n, chart.dim))
    pts.setflags(write=False)
    return pts


TWO_PI = 2 * math.pi
SPHERE_MARGIN = 1e-3


def circle() -> Chart:
    return Chart("circle", ("theta",), ((0.0, TWO_PI),), (True,), 0.0, True)


def torus2() -> Chart:
    return Chart("torus2", ("x", "y"), ((0.0, TWO_PI), (0.0, TWO_PI)), (True, True), 0.0, True)


def sphere2(margin: float = SPHERE_MARGIN) -> Chart:
    return Chart("sphere2", ("theta", "phi"), ((0.0, math.pi), (0.0, TWO_PI)), (False, True), margin, True)


def euclidean(n: int, half_width: float = 10.0) -> Chart:
    names = ("x",) if n == 1 else ("x", "y") if n == 2 else tuple(f"x{i + 1}" for i in range(n))
    return Chart(f"euclidean:{n}", names, tuple((-half_width, half_width) for _ in range(n)), (False,) * n, 0.0, False)


def chart_by_name(name: str, **kwargs) -> Chart:
    if name == "circle":
        return circle()
    if name == "torus2":
        return torus2()
    if name == "sphere2":
        return sphere2(**kwargs)
    if name.startswith("euclidean:"):
        n = int(name.split(":", 1)[1])
        if n < 1:
            raise ValueError("euclidean dimension must be >= 1")
        return euclidean(n, **kwargs)
    raise ValueError(f"unknown manifold {name!r}; expected circle, torus2, sphere2 or euclidean:n")


def standard_metric(chart: Chart) -> "Metric":
    """Round metric on ``sphere2``, flat metric otherwise."""
    n = chart.dim
    if chart.name == "sphere2":
        theta = chart.coordinates()[0]
        return Metric(diagonal([1, symb.sin(theta) ** 2]), chart)
    return Metric(identity_matrix(n), chart)


def builtin(name: str) -> tuple[Chart, "Metric"]:
    chart = chart_by_name(name)
    return chart, standard_metric(chart)


# ---------------------------------------------------------------------------
# matrices of expressions


def as_matrix(rows) -> Matrix:
    return tuple(tuple(simplify(as_expr(v)) for v in row) for row in rows)


def identity_matrix(n: int) -> Matrix:
    return as_matrix([[1 if i == j else 0 for j in range(n)] for i in range(n)])


def diagonal(entries) -> Matrix:
    n = len(entries)
    return as_matrix([[entries[i] if i == j else 0 for j in range(n)] for i in range(n)])


def determinant(m: Matrix) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = symb.const(0)
    for j in range(n):
        if symb.structurally_zero(m[0][j]):
            continue
        minor = tuple(tuple(row[k] for k in range(n) if k != j) for row in m[1:])
        term = m[0][j] * determinant(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def evaluate_matrix(m: Matrix, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(points)
    coords = [pts[:, k] for k in range(pts.shape[1])]
    n = len(m)
    out = np.empty((pts.shape[0], n, n))
    for i in range(n):
        for j in range(n):
            out[:, i, j] = symb.evaluate(m[i][j], coords)
    return out


def _is_diagonal(m: Matrix) -> bool:
    return all(symb.structurally_zero(m[i][j]) for i in range(len(m)) for j in range(len(m)) if i != j)


def _matmul(a: Matrix, b: Matrix) -> Matrix:
    n = len(a)
    return as_matrix(
        [[_sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    )


def _sum(items) -> Expr:
    total = symb.const(0)
    for it in items:
        total = total + it
    return total


def inverse_matrix(m: Matrix, chart: Chart | None = None, tol=None) -> Matrix:
    m = as_matrix(m)
    n = len(m)
    if _is_diagonal(m):
        for i in range(n):
            if is_zero(m[i][i], chart, tol):
                raise SingularMetric(f"diagonal entry {m[i][i]} vanishes identically")
        inv = diagonal([1 / m[i][i] for i in range(n)])
    else:
        det = determinant(m)
        if is_zero(det, chart, tol):
            raise SingularMetric("determinant vanishes identically")
        cof = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                minor = tuple(
                    tuple(m[r][c] for c in range(n) if c != j) for r in range(n) if r != i
                )
                c = determinant(minor) if n > 1 else symb.const(1)
                cof[i][j] = c if (i + j) % 2 == 0 else -c
        inv = as_matrix([[cof[j][i] / det for j in range(n)] for i in range(n)])
    residual = _matmul(m, inv)
    for i in range(n):
        for j in range(n):
            target = residual[i][j] - (1 if i == j else 0)
            if not is_zero(target, chart, tol):
                raise SingularMetric(f"inverse residual ({i},{j}) = {target} is not zero")
    return inv


# ---------------------------------------------------------------------------
# metric


class Metric:
    """Symmetric positive definite matrix of expressions g_ij on a chart."""

    def __init__(self, matrix, chart: Chart, check: bool = True):
        self.matrix = as_matrix(matrix)
        self.chart = chart
        n = chart.dim
        if len(self.matrix) != n or any(len(r) != n for r in self.matrix):
            raise ValueError(f"metric must be {n}x{n}")
        if check:
            for i in range(n):
                for j in range(i + 1, n):
                    if self.matrix[i][j] != self.matrix[j][i]:
                        raise ValueError("metric must be symmetric")
            pts = chart.sample_points(tolerances.current().n_zero, tolerances.current().zero_seed)
            lam = np.linalg.eigvalsh(evaluate_matrix(self.matrix, pts))
            if not np.all(lam[:, 0] > 0):
                raise NonDegeneracyViolation("metric is not positive definite at all sample points")

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __getitem__(self, ij):
        i, j = ij
        return self.matrix[i][j]

    @functools.cached_property
    def inverse(self) -> Matrix:
        return inverse_matrix(self.matrix, self.chart)

    @functools.cached_property
    def det(self) -> Expr:
        return determinant(self.matrix)

    @functools.cached_property
    def log_density_gradient(self) -> VectorField:
        """Components of d(log sqrt|g|) = (1/2) d(det g) / det g."""
        det = self.det
        if symb.is_constant(det):
            return tuple(symb.const(0) for _ in range(self.dim))
        return tuple(simplify(diff(det, i) / (2 * det)) for i in range(self.dim))

    def sqrt_det_values(self, coords) -> np.ndarray:
        return np.sqrt(np.abs(symb.evaluate(self.det, coords)))

    def is_flat(self) -> bool:
        return all(symb.is_constant(v) for row in self.matrix for v in row)


def inverse_metric(g: Metric) -> Matrix:
    return g.inverse


def christoffel(g: Metric) -> tuple:
    """Gamma[i][j][k] = 1/2 g^{il} (d_j g_lk + d_k g_jl - d_l g_jk)."""
    n = g.dim
    ginv = g.inverse
    dg = [[[diff(g.matrix[a][b], c) for c in range(n)] for b in range(n)] for a in range(n)]
    out = []
    for i in range(n):
        rows = []
        for j in range(n):
            row = []
            for k in range(j + 1):
                total = _sum(
                    ginv[i][l] * (dg[l][k][j] + dg[j][l][k] - dg[j][k][l])
                    for l in range(n)
                    if not symb.structurally_zero(ginv[i][l])
                )
                row.append(simplify(total / 2))
            rows.append(row)
        out.append(rows)
    return tuple(
        tuple(tuple(out[i][max(j, k)][min(j, k)] for k in range(n)) for j in range(n)) for i in range(n)
    )


def grad(f, g: Metric) -> VectorField:
    f = as_expr(f)
    n = g.dim
    df = [diff(f, j) for j in range(n)]
    return tuple(
        _sum(g.inverse[i][j] * df[j] for j in range(n) if not symb.structurally_zero(df[j]))
        for i in range(n)
    )


def div(X: Sequence, g: Metric) -> Expr:
    """(1/sqrt|g|) d_i (sqrt|g| X^i), written as d_i X^i + X^i d_i log sqrt|g|."""
    phi = g.log_density_gradient
    return _sum(diff(as_expr(X[i]), i) + as_expr(X[i]) * phi[i] for i in range(g.dim))


def laplacian(f, g: Metric) -> Expr:
    return div(grad(f, g), g)


def inner(X: Sequence, Y: Sequence, g: Metric) -> Expr:
    n = g.dim
    return _sum(
        g.matrix[i][j] * as_expr(X[i]) * as_expr(Y[j])
        for i in range(n)
        for j in range(n)
        if not symb.structurally_zero(g.matrix[i][j])
    )


# ---------------------------------------------------------------------------
# diffusions


@dataclasses.dataclass(frozen=True)
class DiffusionSpec:
    """Generator L = 1/2 a_ij d_i d_j + b^i d_i written in chart coordinates."""

    a: Matrix
    b: VectorField
    chart: Chart

    @classmethod
    def make(cls, a, b, chart: Chart) -> "DiffusionSpec":
        return cls(as_matrix(a), tuple(simplify(as_expr(v)) for v in b), chart)

    def generator(self):
        from .diffop import DiffOp

        n = self.chart.dim
        terms = {}
        for i in range(n):
            for j in range(i, n):
                alpha = [0] * n
                alpha[i] += 1
                alpha[j] += 1
                coef = self.a[i][i] / 2 if i == j else self.a[i][j]
                terms[tuple(alpha)] = coef
            alpha = [0] * n
            alpha[i] = 1
            terms[tuple(alpha)] = self.b[i]
        return DiffOp(terms, self.chart)

    def check_nondegenerate(self, tol=None) -> None:
        n = self.chart.dim
        for i in range(n):
            for j in range(i + 1, n):
                if not is_zero(self.a[i][j] - self.a[j][i], self.chart, tol):
                    raise NonDegeneracyViolation(
                        "second-order coefficient matrix must be symmetric (non-degenerate diffusion)"
                    )
        tol = tolerances.resolve(tol)
        pts = self.chart.sample_points(tol.n_zero, tol.zero_seed)
        vals = evaluate_matrix(self.a, pts)
        if not np.all(np.isfinite(vals)):
            raise NonDegeneracyViolation("second-order coefficients are not finite on the chart")
        lam = np.linalg.eigvalsh(vals)[:, 0]
        if not np.all(lam > 0):
            raise NonDegeneracyViolation(
                f"second-order part is degenerate: smallest eigenvalue {lam.min():.3e} at sample points"
            )


def metric_from_diffusion(spec: DiffusionSpec, tol=None) -> tuple[Metric, VectorField]:
    """Metric G = A^{-1} whose half Laplacian carries the second-order part of L.

    Returns ``(metric, F)`` with ``F`` the first-order remainder
    ``L - 1/2 Laplacian``, computed by symbolic subtraction.
    """
    from .diffop import laplace_beltrami
    from .errors import IdentityViolation

    spec.check_nondegenerate(tol)
    metric = Metric(inverse_matrix(spec.a, spec.chart, tol), spec.chart, check=False)
    remainder = spec.generator() - laplace_beltrami(metric) * symb.const(Fraction(1, 2))
    if remainder.order() > 1:
        raise IdentityViolation(f"remainder has order {remainder.order()}: {remainder}")
    n = spec.chart.dim
    zero = (0,) * n
    if zero in remainder.terms:
        raise IdentityViolation("remainder has a zeroth-order part")
    field = []
    for i in range(n):
        alpha = [0] * n
        alpha[i] = 1
        field.append(remainder.coefficient(tuple(alpha)))
    return metric, tuple(field)


# ---------------------------------------------------------------------------
# quadrature


def quadrature_grid(chart: Chart, resolution: int | Sequence[int]) -> tuple[list[np.ndarray], np.ndarray]:
    """Tensor-product nodes and weights: midpoint on periodic axes, Simpson otherwise."""
    if isinstance(resolution, int):
        resolution = [resolution] * chart.dim
    nodes, weights = [], []
    for (lo, hi), per, m in zip(chart.interior_box(), chart.periodic, resolution):
        if m < 8:
            raise ValueError("quadrature resolution must be at least 8 per axis")
        if per:
            h = (hi - lo) / m
            nodes.append(lo + (np.arange(m) + 0.5) * h)
            weights.append(np.full(m, h))
        else:
            m += m % 2
            h = (hi - lo) / m
            w = np.ones(m + 1)
            w[1:-1:2] = 4
            w[2:-1:2] = 2
            nodes.append(np.linspace(lo, hi, m + 1))
            weights.append(w * h / 3)
    mesh = np.meshgrid(*nodes, indexing="ij")
    wmesh = functools.reduce(np.multiply.outer, weights)
    return mesh, wmesh


def integrate(f: Expr | Callable, g: Metric, chart: Chart | None = None, resolution: int | Sequence[int] = 64) -> float:
    """Integral of f against the Riemannian volume over the margin-shrunk chart."""
    chart = chart or g.chart
    mesh, w = quadrature_grid(chart, resolution)
    values = f(mesh) if callable(f) and not isinstance(f, Expr) else symb.evaluate(f, mesh)
    density = g.sqrt_det_values(mesh)
    integrand = np.broadcast_to(values, w.shape) * density * w
    if not np.all(np.isfinite(integrand)):
        from .errors import DomainError

        raise DomainError("integrand is not finite on the quadrature grid")
    return float(np.sum(integrand))


def warn_margin(chart: Chart, point) -> bool:
    """Return True (and warn) when a point falls in the excluded boundary margin."""
    p = np.atleast_2d(point)
    if chart.margin > 0 and not chart.inside(p, shrink=True).all():
        warnings.warn(f"point {tuple(np.ravel(point))} lies in the excluded margin of {chart.name}", stacklevel=2)
        return True
    return False
