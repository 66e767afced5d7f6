import numpy as np
import pytest

from copodr.bench import gen_partition
from copodr.conic import SolveOptions, assemble, solve


def solve_value(cp, approx="IA", robust_set=None, tol=1e-8):
    A = assemble(cp, approx, robust_set=robust_set)
    sol = solve(A.program, SolveOptions(tol=tol, max_iter=500))
    assert sol.status == "optimal", sol.message
    return A.value(sol), A, sol


@pytest.fixture
def partition():
    return gen_partition((2.0, 2.0, 3.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
