"""Declarative run configuration (YAML or JSON) and its validation."""

from __future__ import annotations

import hashlib
import json
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import geometry, tolerances
from .errors import ConfigError, NonDegeneracyViolation, ParseError
from .estalg import FilteringSystem
from .geometry import Chart, DiffusionSpec, Metric


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ChartBlock(_Block):
    name: str = "custom"
    coords: list[str]
    box: list[tuple[float, float]]
    periodic: list[bool]
    margin: float = 0.0
    compact: bool = False


class ProbeBlock(_Block):
    max_dim: int = Field(16, ge=1)
    max_rounds: int = Field(6, ge=1)
    seed: int = 1


class CertificateBlock(_Block):
    observation: int = Field(0, ge=0)
    n: int = Field(3, ge=1)


class FlowBlock(_Block):
    observation: int = Field(0, ge=0)
    N: int = Field(5, ge=1)
    K: Optional[int] = Field(None, ge=2)


class SimulateBlock(_Block):
    x0: list[float]
    T: float = Field(1.0, gt=0)
    dt: float = Field(1e-3, gt=0)


class KalmanBlock(_Block):
    a: float
    c: float
    m0: float
    P0: float = Field(gt=0)


class FilterBlock(_Block):
    x0: list[float]
    T: float = Field(1.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    dt_pde: float = Field(1e-4, gt=0)
    grid: int | list[int] = 256
    prior: str = "1"
    particles: int = Field(0, ge=0)
    zakai: bool = True
    kalman: Optional[KalmanBlock] = None


class RunConfig(_Block):
    manifold: Optional[str] = None
    chart: Optional[ChartBlock] = None
    metric: Optional[list[list[str | float]]] = None
    diffusion: Optional[list[list[str | float]]] = None
    drift: Optional[list[str | float]] = None
    observations: list[str | float]
    tolerances: dict[str, float] = Field(default_factory=dict)
    seed: int = Field(0, ge=0, lt=2**64)
    probe: ProbeBlock = Field(default_factory=ProbeBlock)
    certificate: CertificateBlock = Field(default_factory=CertificateBlock)
    flow_certificate: FlowBlock = Field(default_factory=FlowBlock)
    simulate: Optional[SimulateBlock] = None
    filter: Optional[FilterBlock] = None

    @field_validator("observations")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one observation expression is required")
        return v

    def content_hash(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def tol(self) -> tolerances.Tolerances:
        return tolerances.DEFAULT.with_overrides(self.tolerances)


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def _load(text: str) -> Any:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config is not valid YAML/JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping"])
    return data


def resolve_chart(cfg: RunConfig) -> Chart:
    if cfg.chart is not None:
        c = cfg.chart
        return Chart(c.name, tuple(c.coords), tuple(tuple(b) for b in c.box), tuple(c.periodic), c.margin, c.compact)
    return geometry.chart_by_name(cfg.manifold)


def _parse_all(items, chart: Chart, where: str, problems: list[str]):
    out = []
    for k, text in enumerate(items):
        try:
            out.append(chart.parse(str(text)))
        except (ParseError, ValueError) as exc:
            problems.append(f"{where}[{k}]: {exc}")
            out.append(None)
    return out


def _parse_matrix(rows, chart: Chart, where: str, problems: list[str]):
    n = chart.dim
    if len(rows) != n or any(len(r) != n for r in rows):
        problems.append(f"{where}: expected a {n}x{n} matrix")
        return None
    parsed = [_parse_all(r, chart, f"{where}[{i}]", problems) for i, r in enumerate(rows)]
    return None if any(e is None for r in parsed for e in r) else parsed


def validate(cfg: RunConfig) -> list[str]:
    """Semantic checks beyond the schema; returns every violation found."""
    problems: list[str] = []
    if (cfg.manifold is None) == (cfg.chart is None):
        problems.append("exactly one of 'manifold' or 'chart' must be given")
        return problems
    try:
        tol = cfg.tol()
    except KeyError as exc:
        problems.append(f"tolerances: unknown name {exc.args[0]!r}; expected one of {tolerances.Tolerances.field_names()}")
        tol = tolerances.DEFAULT
    except (ValueError, TypeError) as exc:
        problems.append(f"tolerances: {exc}")
        tol = tolerances.DEFAULT
    try:
        chart = resolve_chart(cfg)
    except ValueError as exc:
        problems.append(f"chart: {exc}")
        return problems
    n = chart.dim
    if cfg.metric is not None and cfg.diffusion is not None:
        problems.append("exactly one of 'metric' or 'diffusion' may be given")
    if cfg.chart is not None and cfg.metric is None and cfg.diffusion is None:
        problems.append("a custom chart needs either 'metric' or 'diffusion'")
    if cfg.drift is not None and len(cfg.drift) != n:
        problems.append(f"drift: expected {n} components, got {len(cfg.drift)}")
    _parse_all(cfg.observations, chart, "observations", problems)
    if cfg.drift is not None:
        _parse_all(cfg.drift, chart, "drift", problems)
    with tolerances.using(tol):
        if cfg.metric is not None:
            m = _parse_matrix(cfg.metric, chart, "metric", problems)
            if m is not None:
                try:
                    Metric(m, chart)
                except (ValueError, NonDegeneracyViolation) as exc:
                    problems.append(f"metric: {exc}")
        if cfg.diffusion is not None:
            a = _parse_matrix(cfg.diffusion, chart, "diffusion", problems)
            if a is not None:
                try:
                    DiffusionSpec.make(a, [0] * n, chart).check_nondegenerate(tol)
                except NonDegeneracyViolation as exc:
                    problems.append(f"diffusion: {exc}")
    m = len(cfg.observations)
    for name in ("certificate", "flow_certificate"):
        if getattr(cfg, name).observation >= m:
            problems.append(f"{name}.observation: index out of range for {m} observation(s)")
    for name in ("simulate", "filter"):
        block = getattr(cfg, name)
        if block is not None and len(block.x0) != n:
            problems.append(f"{name}.x0: expected {n} components")
    if cfg.filter is not None:
        f = cfg.filter
        _parse_all([f.prior], chart, "filter.prior", problems)
        if f.particles and f.particles < 1000:
            problems.append("filter.particles: use 0 (disabled) or at least 1000")
        if f.kalman is not None and (n != 1 or chart.periodic[0]):
            problems.append("filter.kalman: only available on euclidean:1")
    return problems


def _semantic_leftovers(data: dict, exc: ValidationError) -> list[str]:
    """Semantic problems in the parts of the config that passed the schema."""
    bad = {e["loc"][0] for e in exc.errors() if e["loc"]}
    partial = {k: v for k, v in data.items() if k not in bad}
    placeholder = "observations" not in partial
    if placeholder:
        partial["observations"] = ["0"]
    try:
        cfg = RunConfig.model_validate(partial)
    except ValidationError:
        return []
    found = validate(cfg)
    return [p for p in found if not (placeholder and "observation" in p)]


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every violation."""
    data = _load(text)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = [f"{_loc(e)}: {e['msg']}" for e in exc.errors()]
        raise ConfigError(problems + _semantic_leftovers(data, exc)) from None
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_system(cfg: RunConfig) -> FilteringSystem:
    chart = resolve_chart(cfg)
    hs = [chart.parse(str(h)) for h in cfg.observations]
    drift = [chart.parse(str(v)) for v in cfg.drift] if cfg.drift is not None else [0] * chart.dim
    tol = cfg.tol()
    with tolerances.using(tol):
        if cfg.diffusion is not None:
            a = [[chart.parse(str(v)) for v in row] for row in cfg.diffusion]
            return FilteringSystem.from_diffusion(DiffusionSpec.make(a, drift, chart), hs, tol)
        if cfg.metric is not None:
            metric = Metric([[chart.parse(str(v)) for v in row] for row in cfg.metric], chart)
        else:
            metric = geometry.standard_metric(chart)
        return FilteringSystem(chart, metric, drift, hs)


__all__ = [
    "RunConfig",
    "parse_config",
    "load_config",
    "build_system",
    "validate",
    "resolve_chart",
]
