import numpy as np
import pytest

from nlpde.spectral import TorusGrid


@pytest.fixture
def grid2():
    return TorusGrid(2, 32)


@pytest.fixture
def grid3():
    return TorusGrid(3, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance outcomes keyed by criterion number: (passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
