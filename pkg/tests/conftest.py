import numpy as np
import pytest

from frontspeed.cell_problem import solve_cell
from frontspeed.corrector import solve_corrector
from frontspeed.gaussian_shear import CovarianceModel, CrossGrid, cosine_shear, kl_decompose
from frontspeed.reaction import Nonlinearity, analytic_bistable_front


@pytest.fixture(scope="session")
def bistable():
    return Nonlinearity("bistable", 0.25)


@pytest.fixture(scope="session")
def exact_front():
    return analytic_bistable_front(0.25, 30.0, 2049)


@pytest.fixture(scope="session")
def grid1d():
    return CrossGrid(1.0, 32, 1)


@pytest.fixture(scope="session")
def cosine(grid1d):
    return cosine_shear(grid1d)


@pytest.fixture(scope="session")
def cosine_cell(cosine, exact_front):
    return solve_cell(cosine.fluct, cosine.grid, exact_front.c0)


@pytest.fixture(scope="session")
def cosine_corrector(cosine_cell, exact_front):
    return solve_corrector(cosine_cell, exact_front)


@pytest.fixture(scope="session")
def ou_basis(grid1d):
    return kl_decompose(CovarianceModel("ornstein_uhlenbeck", 1.0, 1.0, 1), grid1d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line; the lines are repeated in the terminal summary."""

    def report(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
