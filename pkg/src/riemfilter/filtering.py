"""Numerical filters used to validate the algebraic results.

State paths follow the Ito SDE whose generator is L; observations are
dY = h(X) dt + dV with unit noise.  The unnormalized conditional density is
computed two ways on a grid: through the gauge-transformed (robust) equation
for u = exp(-sum h^i Y^i) sigma, and through the Stratonovich Zakai equation
directly.  A bootstrap particle filter and the scalar Kalman-Bucy filter act
as independent references.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import symb
from .diffop import DiffOp, commutator
from .errors import (
    IdentityViolation,
    NonFiniteDensity,
    StabilityViolation,
    StepOutOfDomain,
    WeightCollapse,
    ZeroMass,
)
from .estalg import FilteringSystem
from .geometry import Chart, grad, inner
from .rng import OBSERVATION_STREAM, PRIOR_STREAM, RESAMPLE_STREAM, STATE_STREAM, GaussianStream
from .symb import Expr

STABILITY_FACTOR = 0.2


# ---------------------------------------------------------------------------
# paths


@dataclasses.dataclass
class SamplePath:
    times: np.ndarray
    states: np.ndarray
    seed: int
    scheme: str = "euler-maruyama"

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclasses.dataclass
class ObservationPath:
    times: np.ndarray
    values: np.ndarray
    increments: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_function(cls, times, fn: Callable[[np.ndarray], np.ndarray]) -> "ObservationPath":
        """Deterministic path, e.g. ``Y(t) = t`` for controlled experiments."""
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(fn(times), dtype=float).T).T.reshape(len(times), -1)
        values = values - values[0]
        return cls(times, values, np.diff(values, axis=0))

    def at(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation of Y."""
        return np.array([np.interp(t, self.times, self.values[:, i]) for i in range(self.values.shape[1])])


class _Dynamics:
    """Compiled Ito drift and diffusion matrix of the generator."""

    def __init__(self, sys: FilteringSystem):
        self.chart = sys.chart
        self.drift = sys.ito_drift()
        self.a = sys.diffusion_matrix()

    def coefficients(self, X: np.ndarray):
        cols = [X[:, k] for k in range(X.shape[1])]
        P, n = X.shape
        b = np.stack([np.broadcast_to(symb.evaluate(e, cols), (P,)) for e in self.drift], axis=1)
        A = np.empty((P, n, n))
        for i in range(n):
            for j in range(n):
                A[:, i, j] = symb.evaluate(self.a[i][j], cols)
        return b, A

    def step(self, X: np.ndarray, dt: float, Z: np.ndarray | None) -> np.ndarray:
        b, A = self.coefficients(X)
        out = X + b * dt
        if Z is not None:
            if X.shape[1] == 1:
                out = out + np.sqrt(A[:, 0, 0])[:, None] * Z * math.sqrt(dt)
            else:
                S = np.linalg.cholesky(A)
                out = out + np.einsum("pij,pj->pi", S, Z) * math.sqrt(dt)
        return out


def _check_domain(chart: Chart, X: np.ndarray, t: float):
    if not np.all(chart.inside(X, shrink=False)):
        raise StepOutOfDomain(f"state left the non-periodic chart box at t={t:.4g}")


def simulate_ensemble(sys: FilteringSystem, x0, n_paths: int, T: float, dt: float, seed: int,
                      noise: bool = True, unwrap: bool = False) -> np.ndarray:
    """Final states of ``n_paths`` independent Euler-Maruyama paths.

    With ``unwrap`` the periodic axes accumulate displacement instead of wrapping.
    """
    chart = sys.chart
    dyn = _Dynamics(sys)
    X = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths, chart.dim)).copy()
    stream = GaussianStream(seed, STATE_STREAM)
    for k in range(int(round(T / dt))):
        Z = stream.normal((n_paths, chart.dim)) if noise else None
        wrapped = chart.wrap(X)
        moved = dyn.step(wrapped, dt, Z)
        _check_domain(chart, moved, (k + 1) * dt)
        X = X + (moved - wrapped) if unwrap else chart.wrap(moved)
    return X


def simulate_state(sys: FilteringSystem, x0, T: float, dt: float, seed: int, noise: bool = True) -> SamplePath:
    """Euler-Maruyama path with drift b and diffusion factor chol(A) of the generator."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    chart = sys.chart
    dyn = _Dynamics(sys)
    steps = int(round(T / dt))
    X = np.asarray(x0, dtype=float).reshape(1, chart.dim)
    stream = GaussianStream(seed, STATE_STREAM)
    states = np.empty((steps + 1, chart.dim))
    states[0] = chart.wrap(X)[0]
    for k in range(steps):
        Z = stream.normal((1, chart.dim)) if noise else None
        X = chart.wrap(dyn.step(X, dt, Z))
        _check_domain(chart, X, (k + 1) * dt)
        states[k + 1] = X[0]
    return SamplePath(dt * np.arange(steps + 1), states, seed)


def _eval_observations(hs: Sequence[Expr], X: np.ndarray) -> np.ndarray:
    cols = [X[:, k] for k in range(X.shape[1])]
    return np.stack([np.broadcast_to(symb.evaluate(h, cols), (len(X),)) for h in hs], axis=1)


def simulate_observation(path: SamplePath, h: Sequence | FilteringSystem, seed: int, noise: bool = True) -> ObservationPath:
    """dY_k = h(X_{t_k}) dt + sqrt(dt) xi_k with Y_0 = 0."""
    hs = h.observations if isinstance(h, FilteringSystem) else tuple(symb.as_expr(e) for e in h)
    dt = path.dt
    m = len(hs)
    drift = _eval_observations(hs, path.states[:-1]) * dt
    if noise:
        drift = drift + math.sqrt(dt) * GaussianStream(seed, OBSERVATION_STREAM).normal((len(drift), m))
    values = np.vstack([np.zeros((1, m)), np.cumsum(drift, axis=0)])
    return ObservationPath(path.times.copy(), values, drift)


# ---------------------------------------------------------------------------
# Davis gauge transform


@dataclasses.dataclass
class DavisCoefficients:
    L0: DiffOp
    B: list[DiffOp]
    C: list[list[DiffOp]]


def davis_coefficients(sys: FilteringSystem, tol=None) -> DavisCoefficients:
    """L0, B_i = [L0, h^i] and C_ij = [[L0, h^i], h^j] of the robust equation."""
    L0 = sys.L0
    hs = sys.observation_ops()
    B = [commutator(L0, Li, tol) for Li in hs]
    C = [[commutator(Bi, Lj, tol) for Lj in hs] for Bi in B]
    g = sys.metric
    for i, hi in enumerate(sys.observations):
        if B[i].order() > 1:
            raise IdentityViolation(f"[L0, h{i + 1}] has order {B[i].order()}")
        for j, hj in enumerate(sys.observations):
            cij = C[i][j]
            if cij.order() > 0:
                raise IdentityViolation(f"C[{i}][{j}] is not a multiplication operator")
            expected = inner(grad(hi, g), grad(hj, g), g)
            if not symb.equal(cij.coefficient((0,) * sys.chart.dim), expected, sys.chart, tol):
                raise IdentityViolation(f"C[{i}][{j}] differs from <grad h{i + 1}, grad h{j + 1}>")
    return DavisCoefficients(L0, B, C)


# ---------------------------------------------------------------------------
# grids


class Grid:
    """Tensor grid: periodic axes use n equispaced nodes, others n interior
    nodes of a Dirichlet-zero box (margin-shrunk)."""

    def __init__(self, chart: Chart, resolution: int | Sequence[int], metric=None):
        if isinstance(resolution, int):
            resolution = [resolution] * chart.dim
        if any(r < 32 for r in resolution):
            raise ValueError("grid resolution must be at least 32 per axis")
        self.chart = chart
        self.shape = tuple(int(r) for r in resolution)
        self.axes, self.spacing = [], []
        for (lo, hi), per, n in zip(chart.interior_box(), chart.periodic, self.shape):
            if per:
                h = (hi - lo) / n
                self.axes.append(lo + h * np.arange(n))
            else:
                h = (hi - lo) / (n + 1)
                self.axes.append(lo + h * (np.arange(n) + 1))
            self.spacing.append(h)
        self.mesh = np.meshgrid(*self.axes, indexing="ij")
        self.coords = [m.ravel() for m in self.mesh]
        self.cell = float(np.prod(self.spacing))
        density = metric.sqrt_det_values(self.coords) if metric is not None else np.ones(self.size)
        self.weights = np.broadcast_to(density, (self.size,)) * self.cell

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def points(self) -> np.ndarray:
        return np.stack(self.coords, axis=1)

    def evaluate(self, e) -> np.ndarray:
        if callable(e) and not isinstance(e, Expr):
            return np.broadcast_to(np.asarray(e(self.coords), dtype=float), (self.size,)).copy()
        return np.broadcast_to(symb.evaluate(symb.as_expr(e), self.coords), (self.size,)).copy()

    @functools.lru_cache(maxsize=None)
    def _axis_matrix(self, axis: int, order: int) -> sp.csr_matrix:
        n = self.shape[axis]
        h = self.spacing[axis]
        per = self.chart.periodic[axis]
        if order == 0:
            return sp.identity(n, format="csr")
        if order == 1:
            M = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="lil") / (2 * h)
            if per:
                M[0, n - 1] = -1 / (2 * h)
                M[n - 1, 0] = 1 / (2 * h)
        elif order == 2:
            M = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], shape=(n, n), format="lil") / h**2
            if per:
                M[0, n - 1] = 1 / h**2
                M[n - 1, 0] = 1 / h**2
        else:
            return (self._axis_matrix(axis, 2) @ self._axis_matrix(axis, order - 2)).tocsr()
        return M.tocsr()

    def derivative(self, alpha) -> sp.csr_matrix:
        out = None
        for axis, k in enumerate(alpha):
            M = self._axis_matrix(axis, k)
            out = M if out is None else sp.kron(out, M, format="csr")
        return out

    def discretize(self, D: DiffOp) -> sp.csr_matrix:
        """Central-difference matrix of sum c_alpha d^alpha at the nodes."""
        total = sp.csr_matrix((self.size, self.size))
        for alpha, c in D.terms.items():
            coef = self.evaluate(c)
            if not np.all(np.isfinite(coef)):
                raise NonFiniteDensity(f"coefficient {c} is not finite on the grid")
            total = total + sp.diags(coef) @ self.derivative(alpha)
        return total.tocsr()

    def max_second_order(self, D: DiffOp) -> float:
        best = 0.0
        for alpha, c in D.terms.items():
            if sum(alpha) == 2:
                factor = 2.0 if max(alpha) == 2 else 1.0
                best = max(best, float(np.max(np.abs(self.evaluate(c)))) * factor)
        return best

    def stable_dt(self, D: DiffOp) -> float:
        a = self.max_second_order(D)
        return math.inf if a == 0 else STABILITY_FACTOR * min(self.spacing) ** 2 / a


@dataclasses.dataclass
class DensityField:
    grid: Grid
    values: np.ndarray
    time: float

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * self.grid.weights))

    def normalized(self) -> np.ndarray:
        m = self.mass
        if not m > 0:
            raise ZeroMass(f"density at t={self.time} has mass {m}")
        return self.values / m


@dataclasses.dataclass
class DMZSolution:
    times: np.ndarray
    fields: list[DensityField]
    gauge: list[DensityField] | None = None

    @property
    def mass(self) -> np.ndarray:
        return np.array([f.mass for f in self.fields])


def _initial_values(grid: Grid, initial) -> np.ndarray:
    if isinstance(initial, np.ndarray):
        values = np.asarray(initial, dtype=float).ravel().copy()
    else:
        values = grid.evaluate(initial)
    mass = float(np.sum(values * grid.weights))
    if not mass > 0:
        raise ZeroMass("initial density has non-positive mass")
    return values / mass


def _as_grid(sys: FilteringSystem, grid) -> Grid:
    return grid if isinstance(grid, Grid) else Grid(sys.chart, grid, sys.metric)


def _schedule(Y: ObservationPath, dt_pde: float, T: float | None):
    T = float(Y.times[-1]) if T is None else T
    ratio = Y.dt / dt_pde
    sub = int(round(ratio))
    if sub < 1 or abs(ratio - sub) > 1e-9 * max(1.0, ratio):
        raise ValueError("the observation step must be an integer multiple of dt_pde")
    n_obs = int(round(T / Y.dt))
    if n_obs > len(Y.times) - 1:
        raise ValueError("observation path is shorter than the requested horizon")
    return sub, n_obs


def _check_stability(grid: Grid, L0: DiffOp, dt_pde: float):
    bound = grid.stable_dt(L0)
    if dt_pde > bound * (1 + 1e-12):
        raise StabilityViolation(f"dt_pde={dt_pde:g} exceeds the stability bound {bound:g}")


def solve_robust_dmz(sys: FilteringSystem, Y: ObservationPath, grid, dt_pde: float, initial,
                     T: float | None = None, coefficients: DavisCoefficients | None = None) -> DMZSolution:
    """Method of lines + RK4 for du/dt = (L0 + Y^i B_i + 1/2 Y^i Y^j C_ij) u.

    Returns sigma = exp(sum h^i Y^i) u at every observation time; the gauge
    field u is kept in ``gauge``.
    """
    grid = _as_grid(sys, grid)
    coef = coefficients or davis_coefficients(sys)
    _check_stability(grid, coef.L0, dt_pde)
    sub, n_obs = _schedule(Y, dt_pde, T)
    m = len(sys.observations)
    A0 = grid.discretize(coef.L0)
    Bm = [grid.discretize(b) for b in coef.B]
    Cd = [[grid.evaluate(c.coefficient((0,) * sys.chart.dim)) for c in row] for row in coef.C]
    H = [grid.evaluate(h) for h in sys.observations]

    def rhs(u, y):
        out = A0 @ u
        for i in range(m):
            if y[i] != 0.0:
                out += y[i] * (Bm[i] @ u)
                for j in range(m):
                    out += (0.5 * y[i] * y[j]) * (Cd[i][j] * u)
        return out

    u = _initial_values(grid, initial)
    t = 0.0
    us = [DensityField(grid, u.copy(), 0.0)]
    sigmas = [DensityField(grid, u.copy(), 0.0)]
    for k in range(n_obs):
        t0 = Y.times[k]
        y0, y1 = Y.values[k], Y.values[k + 1]
        for s in range(sub):
            a, b = s / sub, (s + 1) / sub
            ya, ym, yb = y0 + a * (y1 - y0), y0 + 0.5 * (a + b) * (y1 - y0), y0 + b * (y1 - y0)
            k1 = rhs(u, ya)
            k2 = rhs(u + 0.5 * dt_pde * k1, ym)
            k3 = rhs(u + 0.5 * dt_pde * k2, ym)
            k4 = rhs(u + dt_pde * k3, yb)
            u = u + (dt_pde / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise NonFiniteDensity(f"robust solution blew up near t={t0 + Y.dt:.4g}")
        t = float(Y.times[k + 1])
        us.append(DensityField(grid, u.copy(), t))
        gauge = np.exp(sum(H[i] * y1[i] for i in range(m))) if m else 1.0
        sigmas.append(DensityField(grid, gauge * u, t))
    return DMZSolution(np.array([f.time for f in sigmas]), sigmas, us)


def solve_zakai_direct(sys: FilteringSystem, Y: ObservationPath, grid, dt_pde: float, initial,
                       T: float | None = None, scheme: str = "heun") -> DMZSolution:
    """Stratonovich Zakai equation d sigma = L0 sigma dt + h^i sigma o dY^i.

    ``heun`` is the predictor-corrector Stratonovich scheme; ``rk4`` treats the
    linearly interpolated Y as a classical control (identical to the robust
    solver's time stepping when h = 0).
    """
    grid = _as_grid(sys, grid)
    L0 = sys.L0
    _check_stability(grid, L0, dt_pde)
    sub, n_obs = _schedule(Y, dt_pde, T)
    A0 = grid.discretize(L0)
    H = [grid.evaluate(h) for h in sys.observations]

    def noise(v, dy):
        out = np.zeros_like(v)
        for hi, d in zip(H, dy):
            if d != 0.0:
                out += hi * v * d
        return out

    sigma = _initial_values(grid, initial)
    fields = [DensityField(grid, sigma.copy(), 0.0)]
    for k in range(n_obs):
        dy = (Y.values[k + 1] - Y.values[k]) / sub
        for _ in range(sub):
            if scheme == "heun":
                f0 = A0 @ sigma
                g0 = noise(sigma, dy)
                pred = sigma + dt_pde * f0 + g0
                sigma = sigma + 0.5 * dt_pde * (f0 + A0 @ pred) + 0.5 * (g0 + noise(pred, dy))
            elif scheme == "rk4":
                rate = dy / dt_pde

                def rhs(v):
                    return A0 @ v + noise(v, rate)

                k1 = rhs(sigma)
                k2 = rhs(sigma + 0.5 * dt_pde * k1)
                k3 = rhs(sigma + 0.5 * dt_pde * k2)
                k4 = rhs(sigma + dt_pde * k3)
                sigma = sigma + (dt_pde / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
        if not np.all(np.isfinite(sigma)):
            raise NonFiniteDensity(f"Zakai solution blew up near t={Y.times[k + 1]:.4g}")
        fields.append(DensityField(grid, sigma.copy(), float(Y.times[k + 1])))
    return DMZSolution(np.array([f.time for f in fields]), fields)


# ---------------------------------------------------------------------------
# statistics


def conditional_stats(source, phis: Sequence) -> np.ndarray:
    """pi_t(phi) for each time and each phi.

    ``source`` is a :class:`DMZSolution`, a single :class:`DensityField`, or a
    ``(points, weights)`` pair of particle arrays.  Returns shape (times, len(phis)).
    """
    if isinstance(source, DensityField):
        source = DMZSolution(np.array([source.time]), [source])
    if isinstance(source, DMZSolution):
        out = []
        for f in source.fields:
            mass = f.mass
            if not mass > 0:
                raise ZeroMass(f"non-positive mass at t={f.time}")
            w = f.values * f.weights
            out.append([float(np.sum(f.grid.evaluate(phi) * w) / mass) for phi in phis])
        return np.array(out)
    points, weights = source
    points = np.atleast_2d(points)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        raise ZeroMass("particle weights sum to zero")
    cols = [points[:, k] for k in range(points.shape[1])]
    vals = []
    for phi in phis:
        v = phi(cols) if callable(phi) and not isinstance(phi, Expr) else symb.evaluate(symb.as_expr(phi), cols)
        vals.append(float(np.sum(np.broadcast_to(v, weights.shape) * weights) / total))
    return np.array([vals])


def circular_mean(source, axis: int = 0) -> np.ndarray:
    """atan2(pi_t(sin), pi_t(cos)) along a periodic axis, wrapped to [0, 2 pi)."""

    def s(c):
        return np.sin(c[axis])

    def co(c):
        return np.cos(c[axis])

    stats = conditional_stats(source, [s, co])
    return np.mod(np.arctan2(stats[:, 0], stats[:, 1]), 2 * np.pi)


def circular_distance(a, b) -> np.ndarray:
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, 2 * np.pi) - np.pi
    return np.abs(d)


def l1_distance(f1: DensityField, f2: DensityField) -> float:
    """L1 distance of the normalized densities with respect to the grid volume."""
    return float(np.sum(np.abs(f1.normalized() - f2.normalized()) * f1.weights))


@dataclasses.dataclass
class FilterReport:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray | None = None
    mass: np.ndarray | None = None
    settings: dict = dataclasses.field(default_factory=dict)
    distances: dict = dataclasses.field(default_factory=dict)


def marginal_means(chart: Chart, source) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis conditional means (circular on periodic axes) and variances (linear axes)."""
    cols_mean, cols_var = [], []
    for k, per in enumerate(chart.periodic):
        if per:
            cols_mean.append(circular_mean(source, k))
            cols_var.append(np.full_like(cols_mean[-1], np.nan))
        else:
            st = conditional_stats(source, [lambda c, k=k: c[k], lambda c, k=k: c[k] ** 2])
            cols_mean.append(st[:, 0])
            cols_var.append(st[:, 1] - st[:, 0] ** 2)
    return np.stack(cols_mean, axis=1), np.stack(cols_var, axis=1)


def dmz_report(sys: FilteringSystem, sol: DMZSolution, settings: dict | None = None) -> FilterReport:
    mean, var = marginal_means(sys.chart, sol)
    return FilterReport(sol.times, mean, var, sol.mass, dict(settings or {}))


# ---------------------------------------------------------------------------
# particle filter


def sample_from_grid(grid: Grid, density: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Draw points from a grid density: pick a node, then jitter uniformly within its cell."""
    stream = GaussianStream(seed, PRIOR_STREAM)
    p = np.asarray(density, dtype=float).ravel() * grid.weights
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, stream.uniform(n), side="right"), grid.size - 1)
    pts = grid.points[idx]
    jitter = (stream.uniform((n, grid.chart.dim)) - 0.5) * np.array(grid.spacing)
    return grid.chart.wrap(pts + jitter)


def systematic_resample(weights: np.ndarray, u0: float) -> np.ndarray:
    N = len(weights)
    positions = (u0 + np.arange(N)) / N
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, positions, side="right"), N - 1)


def particle_filter(sys: FilteringSystem, Y: ObservationPath, n_particles: int, seed: int,
                    initial_points: np.ndarray | None = None, initial=None, grid=None,
                    T: float | None = None) -> FilterReport:
    """Bootstrap filter with log-weight increments h.dY - |h|^2 dt / 2 and
    systematic resampling when the effective sample size drops below N/2."""
    if n_particles < 1000:
        raise ValueError("use at least 1000 particles")
    chart = sys.chart
    if initial_points is None:
        if initial is None:
            raise ValueError("provide initial_points or an initial density")
        g = _as_grid(sys, grid or 256)
        initial_points = sample_from_grid(g, _initial_values(g, initial), n_particles, seed)
    X = np.array(initial_points, dtype=float).reshape(n_particles, chart.dim)
    dyn = _Dynamics(sys)
    noise = GaussianStream(seed, STATE_STREAM)
    resample_stream = GaussianStream(seed, RESAMPLE_STREAM)
    n_obs = int(round((float(Y.times[-1]) if T is None else T) / Y.dt))
    dt = Y.dt
    logw = np.zeros(n_particles)
    means, variances = [], []
    resamples = 0

    def record():
        w = np.exp(logw - logw.max())
        m, v = marginal_means(chart, (X, w))
        means.append(m[0])
        variances.append(v[0])

    record()
    for k in range(n_obs):
        hx = _eval_observations(sys.observations, X)
        logw = logw + hx @ Y.increments[k] - 0.5 * np.sum(hx**2, axis=1) * dt
        spread = float(logw.max() - logw.min())
        if spread > 700:
            raise WeightCollapse(f"log-weight spread {spread:.1f} at step {k}")
        w = np.exp(logw - logw.max())
        w /= w.sum()
        ess = 1.0 / np.sum(w**2)
        if ess < n_particles / 2:
            idx = systematic_resample(w, float(resample_stream.uniform(1)[0]))
            X = X[idx]
            logw = np.zeros(n_particles)
            resamples += 1
        X = chart.wrap(dyn.step(X, dt, noise.normal((n_particles, chart.dim))))
        _check_domain(chart, X, (k + 1) * dt)
        record()
    times = Y.times[: n_obs + 1].copy()
    return FilterReport(times, np.array(means), np.array(variances),
                        settings={"n_particles": n_particles, "seed": seed, "resamples": resamples})


# ---------------------------------------------------------------------------
# Kalman-Bucy


def kalman_bucy(a: float, c: float, m0: float, P0: float, Y: ObservationPath, T: float | None = None) -> FilterReport:
    """Scalar Kalman-Bucy filter for dX = aX dt + dW, dY = cX dt + dV.

    Integrates P' = 2aP + 1 - c^2 P^2 and m' = a m + P c (Y' - c m) with RK4,
    holding Y' = dY/dt constant over each observation interval.
    """
    n_obs = int(round((float(Y.times[-1]) if T is None else T) / Y.dt))
    dt = Y.dt
    m, P = float(m0), float(P0)
    ms, Ps = [m], [P]
    for k in range(n_obs):
        rate = float(Y.increments[k][0]) / dt

        def f(state):
            mm, pp = state
            return np.array([a * mm + pp * c * (rate - c * mm), 2 * a * pp + 1 - c * c * pp * pp])

        s = np.array([m, P])
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        m, P = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ms.append(m)
        Ps.append(P)
    return FilterReport(Y.times[: n_obs + 1].copy(), np.array(ms)[:, None], np.array(Ps)[:, None],
                        settings={"a": a, "c": c, "m0": m0, "P0": P0})
