import numpy as np
import pytest

from hgoct import build, optimize
from hgoct.optimizer import RelaxationConfig


@pytest.fixture(scope="session")
def tls():
    return build("tls")


@pytest.fixture(scope="session")
def ells():
    return build("11ls")


@pytest.fixture(scope="session")
def hcl():
    return build("hcl")


@pytest.fixture(scope="session")
def tls_result(tls):
    return optimize(tls, RelaxationConfig.for_problem(tls, max_iterations=200))


@pytest.fixture(scope="session")
def ells_result(ells):
    return optimize(ells, RelaxationConfig.for_problem(ells, max_iterations=500))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rk4_piecewise(h0, mu, field, psi0, dt, sub=100):
    """Reference: classical RK4 at dt/sub with the field held at its node value over each step.

    The RK4 step for a constant generator is the degree-4 Taylor polynomial of
    the step exponential, so whole steps are matrix powers of that polynomial.
    Returns states at every node and at T.
    """
    h = dt / sub
    eye = np.eye(len(psi0))
    a = -1j * h * (h0[None] - field[:, None, None] * mu[None])
    r = eye + a + a @ a / 2 + a @ a @ a / 6 + a @ a @ a @ a / 24
    half = np.linalg.matrix_power(r, sub // 2)
    nodes = np.empty((len(field), len(psi0)), dtype=complex)
    y = np.asarray(psi0, dtype=complex)
    for j in range(len(field)):
        y = half[j] @ y
        nodes[j] = y
        y = half[j] @ y
    return nodes, y


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
