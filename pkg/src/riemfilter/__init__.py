"""Estimation algebras of filtering systems on Riemannian manifolds.

Symbolic expressions (:mod:`symb`), metric geometry (:mod:`geometry`),
differential operators (:mod:`diffop`), algebra probes and certificates
(:mod:`estalg`) and grid/particle filters (:mod:`filtering`).
"""

from .diffop import DiffOp, adjoint, commutator, compose, laplace_beltrami
from .errors import RiemFilterError
from .estalg import (
    FilteringSystem,
    certificate_compact,
    certificate_flow,
    critical_points,
    dimension_probe,
    q_sequence,
)
from .geometry import Chart, DiffusionSpec, Metric, metric_from_diffusion
from .symb import diff, is_zero, parse, simplify
from .tolerances import Tolerances

__version__ = "0.1.0"

__all__ = [
    "Chart",
    "DiffOp",
    "DiffusionSpec",
    "FilteringSystem",
    "Metric",
    "RiemFilterError",
    "Tolerances",
    "adjoint",
    "certificate_compact",
    "certificate_flow",
    "commutator",
    "compose",
    "critical_points",
    "diff",
    "dimension_probe",
    "is_zero",
    "laplace_beltrami",
    "metric_from_diffusion",
    "parse",
    "q_sequence",
    "simplify",
]
