"""Batch command line front end.

    riemfilter <command> --config PATH [--seed U64] [--out DIR] [--tol NAME=VALUE ...]

Commands: probe, certificate, flow-cert, brackets, simulate, filter, report.
Each run writes ``manifest.json`` plus CSV files under
``<out>/<command>-<config hash>``.  Exit codes: 0 success, 2 configuration
error, 3 failed certificate or constant observation, 4 numerical error.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import estalg, filtering, reports, tolerances
from .config import RunConfig, build_system, load_config
from .errors import CertificateFailure, ConfigError, RiemFilterError

OUT_ENV = "RIEMFILTER_OUT"
COMMANDS = ("probe", "certificate", "flow-cert", "brackets", "simulate", "filter", "report")


class RankDeficient(RiemFilterError):
    exit_code = 3


class _Run:
    """Collects files and reports for one invocation."""

    def __init__(self, root: Path, command: str, cfg: RunConfig, seed: int, tol):
        self.dir = root / f"{command}-{cfg.content_hash()}-s{seed}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.tol = tol
        self.files: list[str] = []
        self.reports: dict[str, dict] = {}

    def write(self, name: str, text: str):
        (self.dir / name).write_text(text, encoding="utf-8")
        self.files.append(name)

    def report(self, key: str, rep):
        self.reports[key] = reports.dump(rep)
        self.write(f"{key}.json", reports.to_json(rep))

    def finish(self, code: int, error: str | None = None, diagnostics: dict | None = None) -> Path:
        man = reports.Manifest(command=self.command, config_hash=self.cfg.content_hash(), seed=self.seed,
                               tolerances={k: float(v) for k, v in vars(self.tol).items()}, exit_code=code,
                               error=error, diagnostics=_jsonable(diagnostics or {}),
                               files=sorted(self.files), reports=self.reports)
        (self.dir / "manifest.json").write_text(reports.to_json(man), encoding="utf-8")
        return self.dir


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, estalg.Certificate):
        return reports.dump(reports.certificate_report(obj))
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


# ---------------------------------------------------------------------------
# commands


def cmd_probe(run: _Run, sysm, out):
    p = run.cfg.probe
    res = estalg.dimension_probe(sysm, p.max_dim, p.max_rounds, p.seed, run.tol)
    run.report("probe", reports.probe_report(res))
    print(f"{res.status} dim {res.dimension}", file=out)


def cmd_certificate(run: _Run, sysm, out):
    c = run.cfg.certificate
    cert = estalg.certificate_compact(sysm, c.observation, c.n, run.tol)
    run.report("certificate", reports.certificate_report(cert))
    run.write("certificate_matrix.csv", reports.matrix_csv(cert.matrix))
    print(f"{cert.verdict} n={cert.n} det={cert.determinant:.6g}", file=out)


def cmd_flow(run: _Run, sysm, out):
    c = run.cfg.flow_certificate
    cert = estalg.certificate_flow(sysm, c.observation, c.N, c.K, run.tol)
    run.report("flow_certificate", reports.flow_report(cert))
    run.write("flow_matrix.csv", reports.matrix_csv(cert.matrix))
    print(f"{cert.verdict} N={cert.N} relative_sigma_min={cert.relative_sigma_min:.3e}", file=out)
    if cert.verdict == "RankDeficient":
        raise RankDeficient(f"sampled matrix is rank deficient (relative sigma_min {cert.relative_sigma_min:.3e})")


def cmd_brackets(run: _Run, sysm, out):
    coef = filtering.davis_coefficients(sysm, run.tol)
    rep = reports.brackets_report(coef, sysm.chart.coords)
    run.report("brackets", rep)
    print(f"L0 = {rep.L0}", file=out)
    for i, b in enumerate(rep.B):
        print(f"B{i + 1} = {b}", file=out)
    for i, row in enumerate(rep.C):
        for j, c in enumerate(row):
            print(f"C{i + 1}{j + 1} = {c}", file=out)


def _paths(run: _Run, sysm, block):
    path = filtering.simulate_state(sysm, block.x0, block.T, block.dt, run.seed)
    obs = filtering.simulate_observation(path, sysm, run.seed)
    return path, obs


def cmd_simulate(run: _Run, sysm, out):
    block = run.cfg.simulate
    if block is None:
        raise ConfigError(["simulate: block is required for this command"])
    path, obs = _paths(run, sysm, block)
    names = list(sysm.chart.coords)
    m = obs.values.shape[1]
    rows = [[t, *x, *y] for t, x, y in zip(path.times, path.states, obs.values)]
    run.write("paths.csv", reports.csv_text(["t", *names, *[f"Y{i + 1}" for i in range(m)]], rows))
    run.report("simulate", reports.SimulateReport(seed=run.seed, dt=block.dt, steps=len(path.times) - 1,
                                                  final_state=path.states[-1].tolist(),
                                                  final_observation=obs.values[-1].tolist()))
    print(f"simulated {len(path.times) - 1} steps", file=out)


def cmd_filter(run: _Run, sysm, out):
    f = run.cfg.filter
    if f is None:
        raise ConfigError(["filter: block is required for this command"])
    chart = sysm.chart
    path, obs = _paths(run, sysm, f)
    prior = chart.parse(f.prior)
    grid = filtering.Grid(chart, f.grid, sysm.metric)
    robust = filtering.solve_robust_dmz(sysm, obs, grid, f.dt_pde, prior, f.T)
    mean_r, var_r = filtering.marginal_means(chart, robust)
    names = list(chart.coords)
    columns = {"robust": mean_r}
    distances: dict[str, float] = {}
    if f.zakai:
        direct = filtering.solve_zakai_direct(sysm, obs, grid, f.dt_pde, prior, f.T)
        columns["zakai"] = filtering.marginal_means(chart, direct)[0]
        distances["l1_robust_zakai"] = filtering.l1_distance(robust.fields[-1], direct.fields[-1])
    if f.particles:
        pf = filtering.particle_filter(sysm, obs, f.particles, run.seed, initial=prior, grid=grid, T=f.T)
        columns["particles"] = pf.mean
        distances["mean_robust_particles"] = _mean_distance(chart, mean_r, pf.mean)
    if f.kalman is not None:
        k = f.kalman
        kb = filtering.kalman_bucy(k.a, k.c, k.m0, k.P0, obs, f.T)
        columns["kalman"] = kb.mean
        distances["mean_robust_kalman"] = float(np.max(np.abs(mean_r - kb.mean)))
        distances["variance_robust_kalman"] = float(np.max(np.abs(var_r - kb.variance)))
    header = ["t", *[f"{key}_{c}" for key in columns for c in names]]
    rows = [[t, *np.concatenate([columns[key][i] for key in columns])] for i, t in enumerate(robust.times)]
    run.write("conditional_mean.csv", reports.csv_text(header, rows))
    run.write("mass.csv", reports.csv_text(["t", "mass"], zip(robust.times, robust.mass)))
    last = robust.fields[-1]
    run.write("density_final.csv",
              reports.csv_text([*names, "sigma", "p"], [[*x, s, p] for x, s, p in zip(grid.points, last.values, last.normalized())]))
    settings = {"grid": list(grid.shape), "dt_pde": f.dt_pde, "dt": f.dt, "T": f.T, "particles": f.particles,
                "prior": f.prior}
    run.report("filter", reports.FilterSummary(
        seed=run.seed, settings=settings, distances=distances,
        final_mean={k: np.asarray(v[-1], dtype=float).tolist() for k, v in columns.items()},
        mass_range=[float(robust.mass.min()), float(robust.mass.max())]))
    for k, v in distances.items():
        print(f"{k} = {v:.3e}", file=out)


def _mean_distance(chart, a, b) -> float:
    d = 0.0
    for k, per in enumerate(chart.periodic):
        diff = filtering.circular_distance(a[:, k], b[:, k]) if per else np.abs(a[:, k] - b[:, k])
        d = max(d, float(np.max(diff)))
    return d


def cmd_report(run: _Run, sysm, out):
    """Run every analysis that applies to the system; failures are recorded, not fatal."""
    worst = 0
    steps = [("brackets", cmd_brackets), ("probe", cmd_probe)]
    if sysm.chart.compact:
        steps.append(("certificate", cmd_certificate))
    steps.append(("flow-cert", cmd_flow))
    if run.cfg.simulate is not None:
        steps.append(("simulate", cmd_simulate))
    if run.cfg.filter is not None:
        steps.append(("filter", cmd_filter))
    failures = {}
    for name, fn in steps:
        try:
            fn(run, sysm, out)
        except RiemFilterError as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            worst = max(worst, exc.exit_code)
            print(f"{name}: {failures[name]}", file=out)
    if failures:
        raise _Partial(worst, failures)


class _Partial(RiemFilterError):
    def __init__(self, code: int, failures: dict):
        super().__init__("; ".join(f"{k}: {v}" for k, v in failures.items()))
        self.exit_code = code
        self.failures = failures


DISPATCH = {
    "probe": cmd_probe,
    "certificate": cmd_certificate,
    "flow-cert": cmd_flow,
    "brackets": cmd_brackets,
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# entry point


def _tol_arg(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected NAME=VALUE")
    name, value = text.split("=", 1)
    return name.strip(), value.strip()


def _seed_arg(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riemfilter", description="Estimation-algebra analysis and filter validation.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML or JSON run configuration")
    p.add_argument("--seed", type=_seed_arg, default=None, help="overrides the config seed")
    p.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./runs)")
    p.add_argument("--tol", action="append", type=_tol_arg, default=[], metavar="NAME=VALUE")
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.tol:
            merged = dict(cfg.tolerances)
            for name, value in args.tol:
                if name not in tolerances.Tolerances.field_names():
                    raise ConfigError([f"--tol: unknown tolerance {name!r}"])
                try:
                    merged[name] = float(value)
                except ValueError:
                    raise ConfigError([f"--tol: {name} needs a number, got {value!r}"]) from None
            cfg = cfg.model_copy(update={"tolerances": merged})
        tol = cfg.tol()
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=err)
        return exc.exit_code
    except OSError as exc:
        print(f"config error: {exc}", file=err)
        return 2
    seed = cfg.seed if args.seed is None else args.seed
    root = Path(args.out or os.environ.get(OUT_ENV) or "runs")
    run = _Run(root, args.command, cfg, seed, tol)
    code, message, diag = 0, None, {}
    try:
        with tolerances.using(tol):
            sysm = build_system(cfg)
            DISPATCH[args.command](run, sysm, out)
    except RiemFilterError as exc:
        code, message = exc.exit_code, f"{type(exc).__name__}: {exc}"
        if isinstance(exc, CertificateFailure):
            diag = exc.diagnostics
        elif isinstance(exc, ConfigError):
            diag = {"violations": exc.violations}
        print(message, file=err)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        code, message = 4, f"{type(exc).__name__}: {exc}"
        print(message, file=err)
        if os.environ.get("RIEMFILTER_DEBUG"):
            traceback.print_exc(file=err)
    where = run.finish(code, message, diag)
    print(f"run directory: {where}", file=out)
    return code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
