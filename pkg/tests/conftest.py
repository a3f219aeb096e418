import numpy as np
import pytest

from mambalab import kernels


@pytest.fixture(params=kernels.BACKENDS)
def backend(request):
    prev = kernels.backend_name()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


@pytest.fixture
def rng():
    from mambalab import Rng
    return Rng(7)


def close(a, b, tol):
    np.testing.assert_allclose(a, b, rtol=0, atol=tol)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
