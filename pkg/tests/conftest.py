import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pwexpand.models import linear_system, nonlinear_system  # noqa: E402
from pwexpand.ulam import assemble, build_grid, stationary_density  # noqa: E402

BASE_GRID = (128, 96)
FINE_SPC = 36864  # 192 x 192 strata per cell

_ACCEPTANCE = []


class Run:
    """An assembled operator with its stationary density and timing."""

    def __init__(self, sys, nx, ny, spc, seed=0):
        t0 = time.perf_counter()
        self.sys = sys
        self.grid = build_grid(sys, nx, ny)
        self.op = assemble(sys, self.grid, spc, seed)
        self.h = stationary_density(self.op)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def linear_sys():
    return linear_system(5, 200, 1.0)


@pytest.fixture(scope="session")
def nonlinear_sys():
    return nonlinear_system()


@pytest.fixture(scope="session")
def linear_fine(linear_sys):
    return Run(linear_sys, *BASE_GRID, FINE_SPC)


@pytest.fixture(scope="session")
def nonlinear_fine(nonlinear_sys):
    return Run(nonlinear_sys, *BASE_GRID, FINE_SPC)


@pytest.fixture(scope="session")
def linear_coarse_256(linear_sys):
    return Run(linear_sys, *BASE_GRID, 256)


@pytest.fixture(scope="session")
def nonlinear_coarse_256(nonlinear_sys):
    return Run(nonlinear_sys, *BASE_GRID, 256)


@pytest.fixture
def record():
    """Collects one line per acceptance criterion for the terminal summary."""

    def _record(label, passed, detail=""):
        line = f"{label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def linear_spectrum_256(linear_coarse_256):
    from pwexpand.ulam import peripheral_spectrum

    return peripheral_spectrum(linear_coarse_256.op, h_star=linear_coarse_256.h)
