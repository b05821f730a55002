import math
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mortar_dgbem import build_cube_mesh  # noqa: E402
from mortar_dgbem.coupling import build_problem  # noqa: E402
from mortar_dgbem.dg_forms import DeltaClippedWarning  # noqa: E402

K1 = math.sqrt(3) * math.pi


@pytest.fixture(autouse=True)
def _quiet_delta_clipping():
    # the experiment's default d clips δ on coarse meshes; tests that care check the warning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeltaClippedWarning)
        yield


@pytest.fixture(scope="session")
def cube0():
    return build_cube_mesh(1.0, 0)


@pytest.fixture(scope="session")
def cube1():
    return build_cube_mesh(1.0, 1)


_PROBLEMS = {}


def problem_at(level, p, k=K1):
    """Cached (spaces, asm, system, problem) for the manufactured problem."""
    key = (level, p, k)
    if key not in _PROBLEMS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DeltaClippedWarning)
            _PROBLEMS[key] = build_problem(build_cube_mesh(1.0, level), p, k)
    return _PROBLEMS[key]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
