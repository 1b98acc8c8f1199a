"""Estimation algebras: construction, closure probing and infinite-dimensionality certificates."""

from __future__ import annotations

import dataclasses
import functools
import itertools
import logging
import math
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import geometry, symb, tolerances
from .diffop import DiffOp, adjoint, commutator, laplace_beltrami
from .errors import (
    CertificateFailure,
    ConstantObservation,
    DegenerateField,
    FlowNotFound,
    IdentityViolation,
    NoCriticalPointFound,
    StepOutOfDomain,
)
from .geometry import Chart, DiffusionSpec, Metric
from .symb import Expr, as_expr

log = logging.getLogger(__name__)

HALF = Fraction(1, 2)


class FilteringSystem:
    """Signal on a chart with generator L = 1/2 Laplacian + F and observations h^1..h^m."""

    def __init__(self, chart: Chart, metric: Metric, drift: Sequence, observations: Sequence):
        self.chart = chart
        self.metric = metric
        self.drift = tuple(symb.simplify(as_expr(v)) for v in drift)
        self.observations = tuple(symb.simplify(as_expr(h)) for h in observations)
        if len(self.drift) != chart.dim:
            raise ValueError(f"drift needs {chart.dim} components")

    @classmethod
    def from_diffusion(cls, spec: DiffusionSpec, observations: Sequence, tol=None) -> "FilteringSystem":
        metric, remainder = geometry.metric_from_diffusion(spec, tol)
        return cls(spec.chart, metric, remainder, observations)

    @classmethod
    def builtin(cls, manifold: str, observations: Sequence[str], drift: Sequence[str] | None = None) -> "FilteringSystem":
        chart, metric = geometry.builtin(manifold)
        hs = [chart.parse(h) for h in observations]
        F = [chart.parse(f) for f in drift] if drift else [0] * chart.dim
        return cls(chart, metric, F, hs)

    @functools.cached_property
    def generator(self) -> DiffOp:
        return laplace_beltrami(self.metric).scale(HALF) + DiffOp.vector_field(self.drift, self.chart)

    @functools.cached_property
    def generator_adjoint(self) -> DiffOp:
        return adjoint(self.generator, self.metric)

    @functools.cached_property
    def L0(self) -> DiffOp:
        return build_L0(self)

    def observation_ops(self) -> list[DiffOp]:
        return [DiffOp.multiplication(h, self.chart) for h in self.observations]

    def diffusion_matrix(self):
        return self.generator.second_order_matrix()

    def ito_drift(self):
        return self.generator.first_order_vector()


def build_L0(sys: FilteringSystem) -> DiffOp:
    """L0 = L* - 1/2 sum_i (h^i)^2."""
    sq = symb.const(0)
    for h in sys.observations:
        sq = sq + h * h
    return sys.generator_adjoint - DiffOp.multiplication(sq * HALF, sys.chart)


def q_op(f, g: Metric) -> Expr:
    """Q f = <grad f, grad f>."""
    gf = geometry.grad(f, g)
    return geometry.inner(gf, gf, g)


def a_h(h, f, g: Metric) -> Expr:
    """A_h f = <grad h, grad f>."""
    return geometry.inner(geometry.grad(h, g), geometry.grad(f, g), g)


@dataclasses.dataclass
class BracketCheck:
    operator: DiffOp
    expected: Expr
    residual: float


def _sampled_residual(a: Expr, b: Expr, chart: Chart, n: int = 100, seed: int = 7) -> float:
    pts = chart.sample_points(n, seed)
    coords = [pts[:, k] for k in range(chart.dim)]
    diff = symb.evaluate(a - b, coords)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def bracket_identity_check(sys: FilteringSystem, f, tol=None, n_points: int = 100) -> BracketCheck:
    """Verify [[L0, f], f] is multiplication by Q f."""
    f = symb.simplify(as_expr(f))
    mf = DiffOp.multiplication(f, sys.chart)
    op = commutator(commutator(sys.L0, mf, tol), mf, tol)
    expected = q_op(f, sys.metric)
    if op.order() > 0:
        raise IdentityViolation(f"[[L0, f], f] has order {op.order()}: {op}")
    got = op.coefficient((0,) * sys.chart.dim)
    residual = _sampled_residual(got, expected, sys.chart, n_points)
    if residual > 1e-9 or not symb.equal(got, expected, sys.chart, tol):
        raise IdentityViolation(f"[[L0, f], f] differs from Q f by {residual:.3e}")
    return BracketCheck(op, expected, residual)


def _require_nonconstant(h: Expr, g: Metric, tol=None) -> None:
    if symb.is_zero(q_op(h, g), g.chart, tol):
        raise ConstantObservation(f"observation {h} is constant on the chart")


def q_sequence(sys: FilteringSystem, j: int, n: int, tol=None) -> list[Expr]:
    """[h^j, Q h^j, ..., Q^n h^j]."""
    h = sys.observations[j]
    _require_nonconstant(h, sys.metric, tol)
    out = [h]
    for _ in range(n):
        out.append(q_op(out[-1], sys.metric))
    return out


# ---------------------------------------------------------------------------
# critical points


@dataclasses.dataclass(frozen=True)
class CriticalPoint:
    point: tuple[float, ...]
    value: float


def _default_seeds(chart: Chart) -> int:
    if chart.dim == 1:
        return 512
    if chart.name == "sphere2":
        return 256
    return 512 if chart.dim == 2 else max(8, int(round(512 ** (2 / chart.dim))))


def _seed_grid(chart: Chart, per_axis: int) -> np.ndarray:
    axes = []
    for (lo, hi), per in zip(chart.interior_box(), chart.periodic):
        if per:
            axes.append(lo + (np.arange(per_axis) + 0.5) * (hi - lo) / per_axis)
        else:
            axes.append(np.linspace(lo, hi, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _grid_minima(values: np.ndarray, shape: tuple[int, ...], periodic) -> np.ndarray:
    """Mask of seeds where ``values`` is no larger than every axis neighbour."""
    v = values.reshape(shape)
    keep = np.isfinite(v)
    for axis, per in enumerate(periodic):
        for shift in (1, -1):
            nb = np.roll(v, shift, axis=axis)
            if not per:
                edge = [slice(None)] * v.ndim
                edge[axis] = 0 if shift == 1 else -1
                nb[tuple(edge)] = np.inf
            keep &= ~(v > nb)
    return keep.ravel()


class _Field:
    """Compiled gradient and Hessian of a scalar expression."""

    def __init__(self, f: Expr, chart: Chart):
        self.f = f
        self.chart = chart
        n = chart.dim
        self.df = [symb.diff(f, i) for i in range(n)]
        self.hess = [[symb.diff(self.df[i], k) for k in range(n)] for i in range(n)]

    def value(self, pts):
        return symb.evaluate(self.f, _cols(pts))

    def gradient(self, pts):
        cols = _cols(pts)
        return np.stack([np.broadcast_to(symb.evaluate(d, cols), len(pts)) for d in self.df], axis=1)

    def hessian(self, pts):
        cols = _cols(pts)
        n = self.chart.dim
        H = np.empty((len(pts), n, n))
        for i in range(n):
            for k in range(n):
                H[:, i, k] = symb.evaluate(self.hess[i][k], cols)
        return H


def _cols(pts):
    pts = np.atleast_2d(pts)
    return [pts[:, k] for k in range(pts.shape[1])]


def _metric_grad_norm(grad_coord: np.ndarray, g: Metric, pts: np.ndarray) -> np.ndarray:
    ginv = geometry.evaluate_matrix(g.inverse, pts)
    return np.sqrt(np.abs(np.einsum("pi,pij,pj->p", grad_coord, ginv, grad_coord)))


def _sym_pinv(H: np.ndarray, rcond: float) -> np.ndarray:
    """Batched pseudo-inverse of symmetric matrices via eigh (cheaper than SVD)."""
    lam, V = np.linalg.eigh(H)
    cut = rcond * np.max(np.abs(lam), axis=1, keepdims=True)
    inv = np.where(np.abs(lam) > cut, 1.0 / np.where(lam == 0, 1.0, lam), 0.0)
    return np.einsum("pik,pk,pjk->pij", V, inv, V)


def critical_points(f, g: Metric, chart: Chart | None = None, seeds_per_axis: int | None = None,
                    tol=None, max_iter: int = 60) -> list[CriticalPoint]:
    """Critical points by Newton refinement from a dense seed grid.

    Converged points satisfy ``|grad f|_g < tau_crit * max(1, G)`` where ``G``
    is the largest gradient norm seen on the seed grid; they are deduplicated
    within ``delta_dedup`` and sorted by coordinates.
    """
    tol = tolerances.resolve(tol)
    chart = chart or g.chart
    f = symb.simplify(as_expr(f))
    if symb.is_zero(q_op(f, g), chart, tol):
        raise DegenerateField(f"{f} is constant; every point is critical")
    field = _Field(f, chart)
    per_axis = seeds_per_axis or _default_seeds(chart)
    pts = _seed_grid(chart, per_axis)
    gnorm = _metric_grad_norm(field.gradient(pts), g, pts)
    scale = max(1.0, float(np.nanmax(gnorm)))
    # Newton only from seeds where |grad f| is locally minimal on the grid
    pts = pts[_grid_minima(gnorm, (per_axis,) * chart.dim, chart.periodic)]
    spacing = min((hi - lo) for lo, hi in chart.interior_box()) / per_axis
    max_step = 8 * spacing
    active = np.ones(len(pts), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p = pts[idx]
        gc = field.gradient(p)
        done = _metric_grad_norm(gc, g, p) < 1e-3 * tol.tau_crit * scale
        if done.any():
            active[idx[done]] = False
            idx, p, gc = idx[~done], p[~done], gc[~done]
            if idx.size == 0:
                break
        H = field.hessian(p)
        step = -np.einsum("pij,pj->pi", _sym_pinv(H, 1e-10), gc)
        norm = np.linalg.norm(step, axis=1)
        too_big = norm > max_step
        step[too_big] *= (max_step / norm[too_big])[:, None]
        p = chart.wrap(p + step)
        pts[idx] = p
        bad = ~np.all(np.isfinite(p), axis=1) | ~chart.inside(p, shrink=False)
        active[idx[bad]] = False
        active[idx[np.linalg.norm(step, axis=1) < 1e-15]] = False
    finite = np.all(np.isfinite(pts), axis=1) & chart.inside(pts, shrink=False)
    pts = pts[finite]
    gnorm = _metric_grad_norm(field.gradient(pts), g, pts)
    pts = pts[gnorm < tol.tau_crit * scale]
    margin_hits = ~chart.inside(pts, shrink=True)
    if margin_hits.any():
        log.warning("rejected %d critical points inside the excluded margin of %s", int(margin_hits.sum()), chart.name)
        pts = pts[~margin_hits]
    pts = _dedup(pts, chart, tol.delta_dedup)
    if len(pts) == 0:
        if not chart.compact:
            raise NoCriticalPointFound(f"no critical point of {f} inside the search box")
        raise NoCriticalPointFound(f"Newton search found no critical point of {f}")
    values = field.value(pts)
    values = np.broadcast_to(values, len(pts))
    return [CriticalPoint(tuple(float(v) for v in p), float(val)) for p, val in zip(pts, values)]


def _dedup(pts: np.ndarray, chart: Chart, delta: float) -> np.ndarray:
    if len(pts) == 0:
        return pts
    pts = chart.wrap(pts)
    for k, ((lo, hi), per) in enumerate(zip(chart.box, chart.periodic)):
        if per:
            near_top = hi - pts[:, k] < delta
            pts[near_top, k] = lo
    rounded = np.unique(np.round(pts / delta) * delta, axis=0)
    keep: list[np.ndarray] = []
    for p in rounded:
        if keep and np.min(chart.distance(np.array(keep), p)) < delta:
            continue
        keep.append(p)
    # refine representatives back to unrounded points
    out = []
    for k in keep:
        d = chart.distance(pts, k)
        out.append(pts[int(np.argmin(d))])
    out = np.array(out)
    order = np.lexsort(out.T[::-1])
    return out[order]


# ---------------------------------------------------------------------------
# compact certificate


@dataclasses.dataclass
class Certificate:
    observation_index: int
    n: int
    points: list[tuple[float, ...]]
    matrix: np.ndarray
    min_abs_diagonal: float
    max_abs_below_diagonal: float
    determinant: float
    verdict: str
    sequence: list[str] = dataclasses.field(default_factory=list)


def _select_point(crit: list[CriticalPoint], tau_diag: float, delta: float) -> CriticalPoint | None:
    candidates = [c for c in crit if abs(c.value) > tau_diag]
    if not candidates:
        return None
    best = max(abs(c.value) for c in candidates)
    ties = [c for c in candidates if abs(c.value) >= best * (1 - 1e-9)]
    return min(ties, key=lambda c: tuple(round(v / delta) for v in c.point))


def certificate_compact(sys: FilteringSystem, j: int, n: int, tol=None, seeds_per_axis: int | None = None) -> Certificate:
    """Upper-triangular evaluation matrix A_ik = Q^i h(x_k) at critical points x_k of Q^k h."""
    tol = tolerances.resolve(tol)
    if not sys.chart.compact:
        raise ValueError(f"chart {sys.chart.name} is not compact; use certificate_flow")
    if n < 1:
        raise ValueError("n must be at least 1")
    H = q_sequence(sys, j, n - 1, tol)
    points = []
    for i in range(n):
        crit = critical_points(H[i], sys.metric, sys.chart, seeds_per_axis, tol)
        choice = _select_point(crit, tol.tau_diag, tol.delta_dedup)
        if choice is None:
            raise CertificateFailure(
                f"no critical point of Q^{i} h with |value| > {tol.tau_diag}",
                {"level": i, "critical_values": [c.value for c in crit]},
            )
        points.append(choice.point)
    pts = np.array(points)
    A = np.array([np.broadcast_to(symb.evaluate(Hi, _cols(pts)), n) for Hi in H[:n]])
    below = max((abs(A[i, k]) for i in range(n) for k in range(i)), default=0.0)
    diag = float(np.min(np.abs(np.diag(A))))
    det = float(np.linalg.det(A))
    cert = Certificate(j, n, points, A, diag, below, det, "InfiniteDimensional",
                       [symb.to_string(Hi, sys.chart.coords) for Hi in H[:n]])
    if below >= tol.tau_tri:
        i, k = max(((i, k) for i in range(n) for k in range(i)), key=lambda ik: abs(A[ik]))
        raise CertificateFailure(
            f"entry A[{i},{k}] = {A[i, k]:.3e} breaks upper-triangularity",
            {"certificate": cert, "entry": (i, k)},
        )
    if diag <= tol.tau_diag:
        raise CertificateFailure(f"diagonal entry {diag:.3e} is not above tau_diag", {"certificate": cert})
    return cert


# ---------------------------------------------------------------------------
# closure probe


@dataclasses.dataclass
class ProbeResult:
    status: str  # "Closed" or "ExceededBound"
    dimension: int
    basis: list[DiffOp]
    bound: int | None = None
    rounds: int = 0
    log: list[dict] = dataclasses.field(default_factory=list)

    @property
    def closed(self) -> bool:
        return self.status == "Closed"


class _SpanTester:
    """Numerical span membership from coefficient values at fixed random points."""

    def __init__(self, chart: Chart, n_points: int, seed: int, tau: float):
        self.chart = chart
        self.points = _cols(chart.sample_points(n_points, seed))
        self.tau = tau
        self.features: list[dict] = []
        self.n_points = n_points

    def features_of(self, D: DiffOp) -> dict:
        return {alpha: np.broadcast_to(symb.evaluate(c, self.points), (self.n_points,)).astype(float)
                for alpha, c in D.terms.items()}

    def _matrix(self, feats: list[dict], keys) -> np.ndarray:
        rows = []
        for f in feats:
            rows.append(np.concatenate([f.get(k, np.zeros(self.n_points)) for k in keys]))
        return np.array(rows)

    def residual(self, feats_basis: list[dict], cand: dict) -> float:
        keys = sorted(set().union(cand, *feats_basis))
        v = self._matrix([cand], keys)[0]
        nv = np.linalg.norm(v)
        if nv == 0 or not np.isfinite(nv):
            return 0.0 if nv == 0 else math.inf
        if not feats_basis:
            return 1.0
        B = self._matrix(feats_basis, keys)
        B = B / np.linalg.norm(B, axis=1, keepdims=True)
        Q, _ = np.linalg.qr(B.T)
        r = v - Q @ (Q.T @ v)
        return float(np.linalg.norm(r) / nv)

    def independent(self, cand: dict) -> bool:
        return self.residual(self.features, cand) > self.tau


def dimension_probe(sys: FilteringSystem, max_dim: int = 16, max_rounds: int = 6, seed: int = 1,
                    tol=None) -> ProbeResult:
    """Bracket {L0, h^1, ..., h^m} until closure or until a bound is exceeded."""
    tol = tolerances.resolve(tol)
    tester = _SpanTester(sys.chart, tol.n_rank, seed, tol.tau_rank)
    basis: list[DiffOp] = []
    events: list[dict] = []

    def consider(D: DiffOp, origin) -> bool:
        if D.is_zero():
            events.append({"pair": origin, "added": False, "reason": "zero", "rank": len(basis)})
            return False
        feats = tester.features_of(D)
        if tester.independent(feats):
            basis.append(D)
            tester.features.append(feats)
            events.append({"pair": origin, "added": True, "order": D.order(), "rank": len(basis)})
            return True
        events.append({"pair": origin, "added": False, "reason": "in span", "rank": len(basis)})
        return False

    consider(sys.L0, "L0")
    for i, op in enumerate(sys.observation_ops()):
        consider(op, f"h{i + 1}")
    tried: set[tuple[int, int]] = set()
    rounds = 0
    while True:
        if len(basis) > max_dim:
            return ProbeResult("ExceededBound", len(basis), basis, max_dim, rounds, events)
        pairs = [(a, b) for a, b in itertools.combinations(range(len(basis)), 2) if (a, b) not in tried]
        if not pairs:
            return ProbeResult("Closed", len(basis), basis, None, rounds, events)
        if rounds >= max_rounds:
            return ProbeResult("ExceededBound", len(basis), basis, max_rounds, rounds, events)
        rounds += 1
        added = False
        for a, b in pairs:
            tried.add((a, b))
            if basis[a].order() <= 0 and basis[b].order() <= 0:
                events.append({"pair": (a, b), "added": False, "reason": "commuting multiplications", "rank": len(basis)})
                continue
            added |= consider(commutator(basis[a], basis[b], tol), (a, b))
            if len(basis) > max_dim:
                return ProbeResult("ExceededBound", len(basis), basis, max_dim, rounds, events)
        if not added and all(p in tried for p in itertools.combinations(range(len(basis)), 2)):
            return ProbeResult("Closed", len(basis), basis, None, rounds, events)


def span_residual(ops: Sequence[DiffOp], basis: Sequence[DiffOp], n_points: int = 128, seed: int = 3) -> float:
    """Largest relative residual of projecting each op onto span(basis)."""
    chart = basis[0].chart
    tester = _SpanTester(chart, n_points, seed, 0.0)
    fb = [tester.features_of(B) for B in basis]
    return max(tester.residual(fb, tester.features_of(D)) for D in ops)


# ---------------------------------------------------------------------------
# gradient flow certificate


@dataclasses.dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray


class _GradientField:
    def __init__(self, h: Expr, g: Metric):
        self.chart = g.chart
        self.components = geometry.grad(h, g)

    def __call__(self, p: np.ndarray) -> np.ndarray:
        cols = [np.atleast_1d(p[..., k]) for k in range(self.chart.dim)]
        out = np.stack([np.broadcast_to(symb.evaluate(c, cols), cols[0].shape) for c in self.components], axis=-1)
        return out.reshape(p.shape)


def _rk4(field, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def gradient_flow(h, g: Metric, x0, t_span: tuple[float, float], dt: float, tol=None) -> Trajectory:
    """Classical RK4 for gamma' = grad h; wraps periodic axes."""
    tol = tolerances.resolve(tol)
    chart = g.chart
    field = _GradientField(symb.simplify(as_expr(h)), g)
    x = np.asarray(x0, dtype=float).reshape(chart.dim)
    t0, t1 = t_span
    steps = int(round(abs(t1 - t0) / dt))
    if steps == 0:
        return Trajectory(np.array([t0]), x[None, :])
    h_step = (t1 - t0) / steps
    times = t0 + h_step * np.arange(steps + 1)
    gn = _metric_grad_norm(field(x)[None, :], g, x[None, :])[0]
    if gn < tol.tau_crit:
        return Trajectory(times, np.repeat(x[None, :], steps + 1, axis=0))
    out = np.empty((steps + 1, chart.dim))
    out[0] = x
    for s in range(steps):
        x = chart.wrap(_rk4(field, x, h_step))
        if not chart.inside(x[None, :], shrink=False)[0]:
            raise StepOutOfDomain(f"gradient flow left the chart box at t={times[s + 1]:.4g}: {x}")
        out[s + 1] = x
    return Trajectory(times, out)


@dataclasses.dataclass
class FlowCertificate:
    observation_index: int
    N: int
    K: int
    source: tuple[float, ...]
    target: tuple[float, ...]
    times: np.ndarray
    matrix: np.ndarray
    singular_values: np.ndarray
    relative_sigma_min: float
    identity_residual: float
    verdict: str


def _find_connection(h: Expr, g: Metric, crit: list[CriticalPoint], tol, delta: float = 1e-4,
                     dt: float = 1e-2, t_max: float = 200.0):
    chart = g.chart
    field = _Field(h, chart)
    flow = _GradientField(h, g)
    scale = 1.0
    for c in sorted(crit, key=lambda c: (c.value, c.point)):
        p = np.array(c.point)
        w, V = np.linalg.eigh(field.hessian(p[None, :])[0])
        for k in np.flatnonzero(w > 1e-8 * max(1.0, np.abs(w).max())):
            for sign in (1.0, -1.0):
                x = chart.wrap(p + sign * delta * V[:, k])
                if not chart.inside(x[None, :], shrink=True)[0]:
                    continue
                states = [x]
                t = 0.0
                try:
                    while t < t_max:
                        x = chart.wrap(_rk4(flow, x, dt))
                        if not chart.inside(x[None, :], shrink=True)[0]:
                            raise StepOutOfDomain("left chart")
                        states.append(x)
                        t += dt
                        gn = _metric_grad_norm(field.gradient(x[None, :]), g, x[None, :])[0]
                        if gn < 1e-7 * scale and chart.distance(p, x) > 10 * delta:
                            break
                except StepOutOfDomain:
                    continue
                others = np.array([q.point for q in crit])
                d = chart.distance(others, x)
                target = int(np.argmin(d))
                if d[target] < 1e-3 and chart.distance(p, others[target]) > 1e-3:
                    return c, crit[target], np.arange(len(states)) * dt, np.array(states)
    raise FlowNotFound("no gradient flow line between two critical points was located")


def _chebyshev(a: float, b: float, K: int) -> np.ndarray:
    k = np.arange(K)
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * np.cos(np.pi * (2 * k + 1) / (2 * K)))


def certificate_flow(sys: FilteringSystem, j: int, N: int, K: int | None = None, tol=None,
                     support: float = 1e-3, fd_step: float = 1e-3, seeds_per_axis: int | None = None) -> FlowCertificate:
    """Rank of A_h^n h sampled along a gradient flow line joining two critical points."""
    tol = tolerances.resolve(tol)
    K = K or 2 * N
    if K < 2 * N:
        raise ValueError("K must be at least 2N")
    g = sys.metric
    chart = sys.chart
    h = sys.observations[j]
    _require_nonconstant(h, g, tol)
    crit = critical_points(h, g, chart, seeds_per_axis, tol)
    src, dst, times, states = _find_connection(h, g, crit, tol)

    seq = [h]
    for _ in range(N + 1):
        seq.append(a_h(h, seq[-1], g))
    f1 = np.broadcast_to(symb.evaluate(seq[1], _cols(states)), len(states))
    peak = float(np.max(f1))
    above = np.flatnonzero(f1 >= support * peak)
    t_lo, t_hi = times[above[0]], times[above[-1]]
    sample_t = _chebyshev(t_lo, t_hi, K)

    flow = _GradientField(h, g)
    dt = times[1] - times[0]

    def state_at(t: float) -> np.ndarray:
        idx = min(int(t // dt), len(states) - 1)
        x = states[idx]
        rem = t - times[idx]
        return chart.wrap(_rk4(flow, x, rem)) if rem > 0 else x

    centers = np.array([state_at(t) for t in sample_t])
    fwd = np.array([chart.wrap(_rk4(flow, x, fd_step)) for x in centers])
    bwd = np.array([chart.wrap(_rk4(flow, x, -fd_step)) for x in centers])
    rows = np.array([np.broadcast_to(symb.evaluate(s, _cols(centers)), K) for s in seq[1:N + 2]])
    M = rows[:N]
    residual = 0.0
    for n in range(N):
        up = np.broadcast_to(symb.evaluate(seq[n + 1], _cols(fwd)), K)
        down = np.broadcast_to(symb.evaluate(seq[n + 1], _cols(bwd)), K)
        fd = (up - down) / (2 * fd_step)
        nxt = rows[n + 1]
        residual = max(residual, float(np.max(np.abs(fd - nxt)) / max(1.0, float(np.max(np.abs(nxt))))))
    scaled = M / np.max(np.abs(M), axis=1, keepdims=True)
    sv = np.linalg.svd(scaled, compute_uv=False)
    rel = float(sv[-1] / sv[0])
    verdict = "InfiniteDimensional" if rel > tol.tau_rank else "RankDeficient"
    return FlowCertificate(j, N, K, src.point, dst.point, sample_t, M, sv, rel, residual, verdict)
