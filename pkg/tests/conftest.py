from __future__ import annotations

import numpy as np
import pytest

from vgtbench.assets import load_builtin
from vgtbench.raster import Camera

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def relief():
    return load_builtin("relief")


@pytest.fixture(scope="session")
def cube():
    return load_builtin("cube")


@pytest.fixture(scope="session")
def icosphere():
    return load_builtin("icosphere")


@pytest.fixture
def camera():
    return Camera()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance():
    """Record a criterion outcome: acceptance(id, passed, detail)."""
    def record(criterion: str, passed: bool, detail: str = ""):
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0].rstrip("."))):
        ok, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
