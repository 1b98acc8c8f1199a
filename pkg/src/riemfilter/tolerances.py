"""Numerical thresholds that quantify "zero" and "nonzero" throughout the package."""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses


@dataclasses.dataclass(frozen=True)
class Tolerances:
    tau_zero: float = 1e-10
    n_zero: int = 64
    tau_rank: float = 1e-8
    n_rank: int = 128
    tau_crit: float = 1e-10
    tau_tri: float = 1e-8
    tau_diag: float = 1e-6
    delta_dedup: float = 1e-6
    zero_seed: int = 20240917

    def replace(self, **changes) -> "Tolerances":
        return dataclasses.replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def with_overrides(self, overrides: dict[str, str | float | int]) -> "Tolerances":
        kinds = {f.name: f.type for f in dataclasses.fields(self)}
        parsed = {}
        for name, value in overrides.items():
            if name not in kinds:
                raise KeyError(name)
            parsed[name] = int(value) if kinds[name] == "int" else float(value)
        return self.replace(**parsed)


DEFAULT = Tolerances()
_active: contextvars.ContextVar[Tolerances] = contextvars.ContextVar("tolerances", default=DEFAULT)


def current() -> Tolerances:
    return _active.get()


def resolve(tol: Tolerances | None) -> Tolerances:
    return tol if tol is not None else _active.get()


@contextlib.contextmanager
def using(tol: Tolerances):
    token = _active.set(tol)
    try:
        yield tol
    finally:
        _active.reset(token)
