import numpy as np
import pytest

from solitondyn.grid import Grid
from solitondyn.groundstate import gp_ground_state, hartree_ground_state, solve_hartree_ground_state


@pytest.fixture(scope="session")
def grid1d():
    # spacing 0.039, box 80
    return Grid(2048, 80.0, 1)


@pytest.fixture(scope="session")
def gp(grid1d):
    return gp_ground_state(grid1d)


@pytest.fixture(scope="session")
def profile():
    return solve_hartree_ground_state(r_max=30.0, n_points=2048, tol=1e-10)


@pytest.fixture(scope="session")
def gs3(profile):
    return hartree_ground_state(Grid(64, 32.0, 3), profile)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gaussian(grid, center=None, width=1.0, k=None):
    """Complex Gaussian packet used as a generic smooth test field."""
    center = np.zeros(grid.dims) if center is None else np.asarray(center, dtype=float)
    k = np.zeros(grid.dims) if k is None else np.asarray(k, dtype=float)
    r2 = sum((x - c) ** 2 for x, c in zip(grid.coords, center))
    phase = sum(kj * x for kj, x in zip(k, grid.coords))
    return np.exp(-r2 / (2 * width**2) + 1j * phase)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
