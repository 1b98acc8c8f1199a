"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance criteria"
section of the terminal summary.
"""

import math
import time

import numpy as np

from riemfilter import filtering as F
from riemfilter import geometry, symb
from riemfilter.diffop import DiffOp, adjoint, commutator, laplace_beltrami
from riemfilter.estalg import (
    FilteringSystem,
    bracket_identity_check,
    certificate_compact,
    certificate_flow,
    dimension_probe,
    gradient_flow,
    q_sequence,
    span_residual,
)
from riemfilter.geometry import DiffusionSpec, integrate, metric_from_diffusion

HALF = symb.const(1) / 2

# systems quoted as worked examples throughout the module contracts
CORPUS = [
    ("circle", ["cos(theta)"], None),
    ("circle", ["sin(2*theta) + cos(theta)"], ["sin(theta)"]),
    ("torus2", ["cos(x)*sin(y)", "sin(x+y)"], ["sin(y)", "0"]),
    ("sphere2", ["cos(theta)"], None),
    ("sphere2", ["cos(theta) + 1/2*sin(theta)*cos(phi)"], None),
    ("euclidean:1", ["x"], None),
    ("euclidean:1", ["x"], ["tanh(x)"]),
    ("euclidean:1", ["x"], ["-x"]),
    ("euclidean:1", ["x^2"], None),
    ("euclidean:2", ["x", "sin(y)"], ["-y", "x"]),
]


def _random_field(chart, rng) -> symb.Expr:
    cs = chart.coordinates()
    a, b, c = rng.uniform(-1, 1, 3)
    k, m = (int(v) for v in rng.integers(1, 4, 2))
    if all(chart.periodic):
        x, y = cs[0], cs[-1]
        return a * symb.sin(k * x + b) * symb.cos(m * y) + c * symb.exp(symb.sin(x + y))
    if chart.name.startswith("sphere"):
        th, ph = cs
        return a * symb.cos(th) + b * symb.sin(th) * symb.cos(m * ph + c) + symb.sin(th) ** 2 * symb.sin(ph)
    # bounded fields keep the absolute residual meaningful on the [-10, 10] box
    x, y = cs[0], cs[-1]
    return a * symb.sin(k * x) + b * symb.cos(m * y + c) + symb.exp(-(x * x + y * y) / 20) / 2


def _random_drift(chart, rng) -> list:
    cs = chart.coordinates()
    return [float(rng.uniform(-1, 1)) * symb.sin(cs[i] + cs[0]) for i in range(chart.dim)]


def test_bracket_identity(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for name in ("circle", "torus2", "sphere2", "euclidean:1", "euclidean:2"):
        chart, g = geometry.builtin(name)
        for _ in range(5):
            f = _random_field(chart, rng)
            sys = FilteringSystem(chart, g, _random_drift(chart, rng), [f])
            worst = max(worst, bracket_identity_check(sys, f, n_points=100).residual)
    ok = worst < 1e-9
    assert acceptance(1, "bracket identity", ok, f"max residual {worst:.2e} over 25 fields")


def test_bch_truncation(acceptance):
    failures = []
    for manifold, obs, drift in CORPUS:
        sys = FilteringSystem.builtin(manifold, obs, drift)
        for hop in sys.observation_ops():
            triple = commutator(commutator(commutator(sys.L0, hop), hop), hop)
            if not triple.is_zero():
                failures.append((manifold, obs))
    ok = not failures
    assert acceptance(2, "BCH truncation", ok, f"{len(CORPUS)} systems, nonzero triple brackets: {failures}")


def test_oscillator_closure(acceptance):
    sys = FilteringSystem.builtin("euclidean:1", ["x"])
    start = time.perf_counter()
    res = dimension_probe(sys, max_dim=10)
    elapsed = time.perf_counter() - start
    chart = sys.chart
    x = chart.coordinates()[0]
    span = [DiffOp.identity(chart), DiffOp.multiplication(x, chart), DiffOp.partial(0, chart), sys.L0]
    resid = max(span_residual(span, res.basis), span_residual(res.basis, span))
    ok = res.status == "Closed" and res.dimension == 4 and resid < 1e-8 and elapsed < 1.0
    assert acceptance(3, "oscillator closure", ok,
                      f"{res.status} dim {res.dimension}, span residual {resid:.1e}, {elapsed:.3f} s")


def test_benes_closure(acceptance):
    res = dimension_probe(FilteringSystem.builtin("euclidean:1", ["x"], ["tanh(x)"]))
    ok = res.status == "Closed" and res.dimension == 4
    assert acceptance(4, "Benes closure", ok, f"{res.status} dim {res.dimension}")


def test_compact_certificate(acceptance):
    sys = FilteringSystem.builtin("circle", ["cos(theta)"])
    c5 = certificate_compact(sys, 0, 5)
    c3 = certificate_compact(sys, 0, 3)
    exact = np.array([[1, 0, math.sqrt(2) / 2], [0, 1, 0.5], [0, 0, 1]])
    err3 = float(np.max(np.abs(c3.matrix - exact)))
    det_err = abs(c3.determinant - 1)
    ok = (c5.max_abs_below_diagonal < 1e-8 and c5.min_abs_diagonal > 0.1
          and err3 < 1e-9 and det_err < 1e-6)
    assert acceptance(5, "compact certificate", ok,
                      f"n=5 below {c5.max_abs_below_diagonal:.1e} diag {c5.min_abs_diagonal:.3f}; "
                      f"n=3 entry err {err3:.1e} det err {det_err:.1e}")


def test_non_closure(acceptance):
    sys = FilteringSystem.builtin("circle", ["cos(theta)"])
    res = dimension_probe(sys, max_dim=10)
    H = q_sequence(sys, 0, 5)[1:]
    G = np.array([[integrate(a * b, sys.metric, resolution=512) for b in H] for a in H])
    raw = np.linalg.svd(G, compute_uv=False)
    # the norms of Q^k h span 2^26; independence is judged on unit-normalised fields
    d = np.sqrt(np.diag(G))
    sv = np.linalg.svd(G / np.outer(d, d), compute_uv=False)
    rel = float(sv[-1] / sv[0])
    ok = res.status == "ExceededBound" and res.dimension >= 10 and rel > 1e-6
    assert acceptance(6, "non-closure", ok,
                      f"{res.status} dim {res.dimension}; Gram rel sigma_min {rel:.3f} "
                      f"(unnormalised {raw[-1] / raw[0]:.1e})")


def test_flow_certificate(acceptance):
    sys = FilteringSystem.builtin("circle", ["cos(theta)"])
    cert = certificate_flow(sys, 0, 5, 16)
    h = sys.observations[0]
    theta0, dt = 2.0, 1e-2
    tr = gradient_flow(h, sys.metric, [theta0], (0.0, 3.0), dt)
    closed = 2 * np.arctan(math.tan(theta0 / 2) * np.exp(-tr.times))
    flow_err = float(np.max(np.abs(tr.points[:, 0] - closed)))
    ok = (cert.relative_sigma_min > 1e-6 and cert.matrix.shape == (5, 16)
          and cert.identity_residual < 1e-4 and flow_err < 1e-6)
    assert acceptance(7, "flow certificate", ok,
                      f"rel sigma_min {cert.relative_sigma_min:.3f}, identity residual "
                      f"{cert.identity_residual:.1e}, RK4 vs closed form {flow_err:.1e}")


def test_metric_from_diffusion(acceptance):
    chart = geometry.torus2()
    x, y = chart.coordinates()
    rng = np.random.default_rng(77)
    worst_order = -1
    matches = True
    for _ in range(5):
        p, q, r = rng.uniform(0.1, 0.5, 3)
        s = float(rng.uniform(-0.5, 0.5))
        a = [[2 + p * symb.sin(x), s * symb.cos(y)], [s * symb.cos(y), 1.5 + q * symb.cos(x + r * y)]]
        b = [r * symb.sin(y), -p * symb.cos(x)]
        spec = DiffusionSpec.make(a, b, chart)
        g, _ = metric_from_diffusion(spec)
        L = spec.generator()
        half = laplace_beltrami(g).scale(HALF)
        for alpha in ((2, 0), (1, 1), (0, 2)):
            matches &= symb.is_zero(L.coefficient(alpha) - half.coefficient(alpha), chart)
        worst_order = max(worst_order, (L - half).order())
    ok = matches and worst_order <= 1
    assert acceptance(8, "metric from diffusion", ok,
                      f"degree-2 parts equal: {matches}, max remainder order {worst_order}")


def _davis_run():
    sys = FilteringSystem.builtin("circle", ["cos(theta)"])
    prior = sys.chart.parse("exp(2*cos(theta - 1))")
    path = F.simulate_state(sys, [1.0], 1.0, 1e-3, 2024)
    Y = F.simulate_observation(path, sys, 2024)
    robust = F.solve_robust_dmz(sys, Y, 256, 1e-4, prior)
    direct = F.solve_zakai_direct(sys, Y, 256, 1e-4, prior)
    pf = F.particle_filter(sys, Y, 100_000, 2024, initial=prior, grid=256)
    return robust, direct, pf


def test_davis_cancellation(acceptance):
    robust, direct, pf = _davis_run()
    l1 = F.l1_distance(robust.fields[-1], direct.fields[-1])
    m_pf = pf.mean[-1, 0]
    d_robust = float(F.circular_distance(F.circular_mean(robust.fields[-1])[0], m_pf))
    d_direct = float(F.circular_distance(F.circular_mean(direct.fields[-1])[0], m_pf))
    ok = l1 < 1e-2 and d_robust < 0.05 and d_direct < 0.05
    assert acceptance(9, "Davis cancellation", ok,
                      f"L1 {l1:.1e}, mean distance to particles robust {d_robust:.4f} direct {d_direct:.4f}")


def test_kalman_control(acceptance):
    sys = FilteringSystem.builtin("euclidean:1", ["x"], ["-x"])
    prior = sys.chart.parse("exp(-(x-0.5)^2/(2*0.25))")
    path = F.simulate_state(sys, [0.5], 1.0, 1e-3, 21)
    Y = F.simulate_observation(path, sys, 21)
    rep = F.dmz_report(sys, F.solve_robust_dmz(sys, Y, 401, 2.5e-4, prior))
    kb = F.kalman_bucy(-1, 1, 0.5, 0.25, Y)
    dm = abs(rep.mean[-1, 0] - kb.mean[-1, 0])
    dv = abs(rep.variance[-1, 0] - kb.variance[-1, 0])

    silent = FilteringSystem.builtin("euclidean:1", ["0"], ["-x"])
    Y0 = F.simulate_observation(path, silent, 21)
    sol = F.solve_robust_dmz(silent, Y0, 401, 2.5e-4, prior)
    drift = float(np.max(np.abs(sol.mass / sol.mass[0] - 1)))
    ok = dm < 1e-2 and dv < 1e-2 and drift < 1e-6
    assert acceptance(10, "Kalman control", ok,
                      f"T=1 mean err {dm:.1e}, variance err {dv:.1e}; h=0 mass drift {drift:.1e}")


def _random_operator(chart, rng) -> DiffOp:
    cs = chart.coordinates()
    terms = {}
    for alpha in np.ndindex(*([3] * chart.dim)):
        if sum(alpha) > 2:
            continue
        a, b = rng.uniform(-1, 1, 2)
        k = int(rng.integers(0, 3))
        terms[tuple(int(v) for v in alpha)] = a * symb.cos(k * cs[0]) + b * symb.sin(cs[-1])
    return DiffOp(terms, chart)


def test_adjoint(acceptance):
    rng = np.random.default_rng(11)
    worst = {}
    for name in ("circle", "sphere2"):
        chart, g = geometry.builtin(name)
        cs = chart.coordinates()
        if name == "circle":
            u = symb.exp(symb.sin(cs[0]))
            v = symb.cos(2 * cs[0]) + symb.sin(cs[0])
            res = 256
        else:
            # high-order vanishing at the poles keeps boundary terms below quadrature error
            th, ph = cs
            u = symb.sin(th) ** 6 * (symb.cos(ph) + symb.cos(th))
            v = symb.sin(th) ** 6 * symb.exp(symb.sin(ph) * symb.cos(th))
            res = [256, 128]
        worst[name] = 0.0
        for _ in range(10):
            D = _random_operator(chart, rng)
            lhs = integrate(D.apply(u) * v, g, resolution=res)
            rhs = integrate(u * adjoint(D, g).apply(v), g, resolution=res)
            worst[name] = max(worst[name], abs(lhs - rhs))
    ok = max(worst.values()) < 1e-6
    assert acceptance(11, "adjoint", ok,
                      f"max residual S1 {worst['circle']:.1e}, S2 interior {worst['sphere2']:.1e}")
