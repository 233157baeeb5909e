import numpy as np
import pytest

from relkin.cross_section import CrossSection
from relkin.grid import build_angular_quadrature, build_momentum_grid
from relkin.operators import OperatorWorkspace


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-resolution acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])


@pytest.fixture(scope="session")
def small_grid():
    return build_momentum_grid(8.0, 9)


@pytest.fixture(scope="session")
def small_quad():
    return build_angular_quadrature(4, 8)


@pytest.fixture(scope="session")
def ws_small(small_grid, small_quad):
    ws = OperatorWorkspace(small_grid, small_quad, CrossSection())
    ws.eval_nu()
    return ws


@pytest.fixture(scope="session")
def ws_direct(small_grid, small_quad):
    ws = OperatorWorkspace(small_grid, small_quad, CrossSection(), form="direct")
    ws.eval_nu()
    return ws


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gaussian_F(grid, centre=(0.5, -0.3, 0.2), width=1.2, mix=0.3):
    P = grid.points - np.asarray(centre)
    bump = np.exp(-0.5 * np.sum(P * P, axis=1) / width**2)
    return (1.0 - mix) * grid.J + mix * bump / np.sum(bump * grid.weights) * np.sum(grid.J * grid.weights)
