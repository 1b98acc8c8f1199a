import math

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from riemfilter import symb
from riemfilter.estalg import FilteringSystem
from riemfilter.geometry import builtin

settings.register_profile("repo", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def circle():
    return builtin("circle")


@pytest.fixture(scope="session")
def sphere():
    return builtin("sphere2")


@pytest.fixture(scope="session")
def torus():
    return builtin("torus2")


@pytest.fixture(scope="session")
def circle_cos():
    return FilteringSystem.builtin("circle", ["cos(theta)"])


@pytest.fixture(scope="session")
def oscillator():
    return FilteringSystem.builtin("euclidean:1", ["x"])


def smooth_exprs(dim: int, max_leaves: int = 6):
    """Random smooth expressions built from coordinates, small integers, sin, cos and exp."""
    coords = symb.coordinates([f"c{i}" for i in range(dim)])
    leaves = st.one_of(st.sampled_from(coords), st.integers(-3, 3).map(symb.const))

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda p: p[0] + p[1]),
            st.tuples(children, children).map(lambda p: p[0] * p[1]),
            children.map(symb.sin),
            children.map(symb.cos),
            children.map(lambda e: symb.exp(symb.sin(e))),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def random_point(dim: int, seed: int):
    import numpy as np

    rng = np.random.default_rng(seed)
    return rng.uniform(0.2, 2 * math.pi - 0.2, size=dim)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
