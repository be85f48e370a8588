import numpy as np
import pytest

from greenstop._backend import BACKENDS, HAVE_NUMBA
from greenstop.kernel_oracle import FourierGreenKernel
from greenstop.model import EXAMPLE_1, EXAMPLE_2, Problem
from greenstop.solver import solve

AVAILABLE_BACKENDS = [b for b in BACKENDS if b != "numba" or HAVE_NUMBA]


@pytest.fixture(params=AVAILABLE_BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def ex1():
    return Problem.jump_ou(EXAMPLE_1, 1.0)


@pytest.fixture(scope="session")
def ex2():
    return Problem.jump_ou(EXAMPLE_2, 1.0)


@pytest.fixture(scope="session")
def ex1_kernel(ex1):
    return FourierGreenKernel(ex1)


@pytest.fixture(scope="session")
def ex2_kernel(ex2):
    return FourierGreenKernel(ex2)


@pytest.fixture(scope="session")
def ex1_report(ex1, ex1_kernel):
    return solve(ex1, ex1_kernel)


@pytest.fixture(scope="session")
def ex2_report(ex2, ex2_kernel):
    return solve(ex2, ex2_kernel)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        for line in results[n]:
            terminalreporter.write_line(line)
    missing = [n for n in range(1, 12) if n not in results]
    if missing:
        terminalreporter.write_line(f"not run: {missing}")
