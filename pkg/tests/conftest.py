import numpy as np
import pytest

from chemo4d.core import Params, build_grid, gaussian_bump, threshold_constants
from chemo4d.evolution import StepperConfig, run


@pytest.fixture(scope="session")
def params():
    return Params()


@pytest.fixture(scope="session")
def grid512():
    return build_grid(20.0, 512)


@pytest.fixture(scope="session")
def subcritical_series(grid512, params):
    """Standard subcritical run: width-1 bump at half the boundedness mass, t_end=10."""
    m = 0.5 * threshold_constants(params).M_bounded
    u0 = gaussian_bump(1.0, m, grid512)
    z = grid512.zeros()
    return run(u0, z, z, params, StepperConfig(dt=1e-3, t_end=10.0, snapshot_every=50))


def rel_l2(grid, a, b):
    from chemo4d.core import integrate
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.sqrt(integrate(grid, (a - b) ** 2) / integrate(grid, b**2)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(LINES):
            terminalreporter.write_line(LINES[k])
