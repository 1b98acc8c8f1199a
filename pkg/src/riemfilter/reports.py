"""Versioned JSON report schemas and CSV writers.

Every report carries ``schema`` = ``"riemfilter.<kind>/<version>"`` and
re-validates through :func:`load_report`.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from . import symb
from .diffop import to_string as op_string
from .estalg import Certificate, FlowCertificate, ProbeResult

SCHEMA_VERSION = 1


class _Report(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProbeReport(_Report):
    schema_: Literal["riemfilter.probe/1"] = Field("riemfilter.probe/1", alias="schema")
    status: str
    dimension: int
    bound: Optional[int]
    rounds: int
    basis: list[str]
    log: list[dict[str, Any]]


class CertificateReport(_Report):
    schema_: Literal["riemfilter.certificate/1"] = Field("riemfilter.certificate/1", alias="schema")
    observation_index: int
    n: int
    verdict: str
    points: list[list[float]]
    matrix: list[list[float]]
    min_abs_diagonal: float
    max_abs_below_diagonal: float
    determinant: float
    sequence: list[str]


class FlowCertificateReport(_Report):
    schema_: Literal["riemfilter.flow_certificate/1"] = Field("riemfilter.flow_certificate/1", alias="schema")
    observation_index: int
    N: int
    K: int
    verdict: str
    source: list[float]
    target: list[float]
    times: list[float]
    matrix: list[list[float]]
    singular_values: list[float]
    relative_sigma_min: float
    identity_residual: float


class BracketsReport(_Report):
    schema_: Literal["riemfilter.brackets/1"] = Field("riemfilter.brackets/1", alias="schema")
    L0: str
    B: list[str]
    C: list[list[str]]


class SimulateReport(_Report):
    schema_: Literal["riemfilter.simulate/1"] = Field("riemfilter.simulate/1", alias="schema")
    seed: int
    dt: float
    steps: int
    final_state: list[float]
    final_observation: list[float]


class FilterSummary(_Report):
    schema_: Literal["riemfilter.filter/1"] = Field("riemfilter.filter/1", alias="schema")
    seed: int
    settings: dict[str, Any]
    final_mean: dict[str, list[float]]
    distances: dict[str, float]
    mass_range: list[float]


class Manifest(_Report):
    schema_: Literal["riemfilter.manifest/1"] = Field("riemfilter.manifest/1", alias="schema")
    command: str
    config_hash: str
    seed: int
    tolerances: dict[str, float]
    exit_code: int
    error: Optional[str] = None
    diagnostics: dict[str, Any] = Field(default_factory=dict)
    files: list[str] = Field(default_factory=list)
    reports: dict[str, Any] = Field(default_factory=dict)


AnyReport = Union[
    ProbeReport, CertificateReport, FlowCertificateReport, BracketsReport, SimulateReport, FilterSummary, Manifest
]
_ADAPTER = TypeAdapter(AnyReport)


def dump(report: _Report) -> dict:
    return report.model_dump(mode="json", by_alias=True)


def to_json(report: _Report) -> str:
    return json.dumps(dump(report), indent=2, sort_keys=True)


def load_report(data: str | dict) -> _Report:
    """Re-validate an emitted report against the schema it names."""
    if isinstance(data, str):
        data = json.loads(data)
    return _ADAPTER.validate_python(data)


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def probe_report(res: ProbeResult) -> ProbeReport:
    log = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in e.items()} for e in res.log]
    return ProbeReport(status=res.status, dimension=res.dimension, bound=res.bound, rounds=res.rounds,
                       basis=[op_string(b) for b in res.basis], log=log)


def certificate_report(c: Certificate) -> CertificateReport:
    return CertificateReport(observation_index=c.observation_index, n=c.n, verdict=c.verdict,
                             points=[list(map(float, p)) for p in c.points], matrix=_floats(c.matrix),
                             min_abs_diagonal=c.min_abs_diagonal, max_abs_below_diagonal=c.max_abs_below_diagonal,
                             determinant=c.determinant, sequence=list(c.sequence))


def flow_report(c: FlowCertificate) -> FlowCertificateReport:
    return FlowCertificateReport(observation_index=c.observation_index, N=c.N, K=c.K, verdict=c.verdict,
                                 source=_floats(c.source), target=_floats(c.target), times=_floats(c.times),
                                 matrix=_floats(c.matrix), singular_values=_floats(c.singular_values),
                                 relative_sigma_min=c.relative_sigma_min, identity_residual=c.identity_residual)


def brackets_report(coef, names) -> BracketsReport:
    return BracketsReport(L0=op_string(coef.L0), B=[op_string(b) for b in coef.B],
                          C=[[symb.to_string(c.coefficient((0,) * len(names)), names) for c in row] for row in coef.C])


def csv_text(header: list[str], rows) -> str:
    """CSV with fixed float formatting so identical inputs give identical bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def matrix_csv(M) -> str:
    M = np.asarray(M, dtype=float)
    return csv_text([f"c{k}" for k in range(M.shape[1])], M.tolist())
