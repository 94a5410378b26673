import numpy as np
import pytest

from hilbspec.core import CurvePanel, Quadrature, center_panel

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_grid():
    return Quadrature.uniform(1001)


@pytest.fixture
def irregular_grid(rng):
    u = np.sort(rng.uniform(0, 1, 40))
    return Quadrature.trapezoid(np.r_[0.0, u, 1.0])


def random_centered_panel(rng, n, quadrature):
    panel = CurvePanel(rng.standard_normal((n, quadrature.m)), quadrature)
    return center_panel(panel)[0]
