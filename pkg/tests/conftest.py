import numpy as np
import pytest

from varbridge.gp_core import KernelHyperparams, KernelKind, Observations
from varbridge.paths import TimeGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ou_hp():
    return KernelHyperparams(1.0, 1.0, 0.1)


@pytest.fixture
def small_problem():
    """Three noisy observations on [0, 4] with a 16-step grid."""
    obs = Observations([0.5, 1.7, 3.1], [0.4, -0.3, 0.9])
    grid = TimeGrid.build(0.0, 4.0, 16, obs.times)
    return obs, grid


EXP = KernelKind.EXPONENTIAL
M32 = KernelKind.MATERN32


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at flat ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def directional_diff(f, x, d, h=1e-5):
    return (f(x + h * d) - f(x - h * d)) / (2 * h)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
