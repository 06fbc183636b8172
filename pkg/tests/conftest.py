import numpy as np
import pytest

from fracpoincare import Grid, build_operator, eigendecompose, exp_power, gaussian


@pytest.fixture(scope="session")
def gauss_op():
    return build_operator(gaussian(1), Grid(1, 8.0, 321))


@pytest.fixture(scope="session")
def gauss_dec(gauss_op):
    return eigendecompose(gauss_op)


@pytest.fixture(scope="session")
def gauss2_op():
    return build_operator(gaussian(2), Grid(2, 7.0, 41))


@pytest.fixture(scope="session")
def exp1_op():
    return build_operator(exp_power(1.0, 1), Grid(1, 30.0, 601))


@pytest.fixture(scope="session")
def exp1_dec(exp1_op):
    return eigendecompose(exp1_op)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
