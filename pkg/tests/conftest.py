import math

import pytest

from freefront.model import MediumModel


@pytest.fixture(scope="session")
def logistic():
    """Homogeneous logistic medium a = b = 1."""
    return MediumModel.homogeneous(1.0, 1.0)


@pytest.fixture(scope="session")
def spatial():
    """a = 1 + 0.5 cos(2 pi x / L) with L = 2 pi."""
    return MediumModel.logistic("1 + 0.5*cos(1x)", "1", omega=1.0, L=2.0 * math.pi)


@pytest.fixture(scope="session")
def spacetime():
    """a = 1 + 0.5 cos(2 pi t / omega) cos(2 pi x / L)."""
    return MediumModel.logistic("1 + 0.5*cos(1t)*cos(1x)", "1", omega=1.0, L=2.0)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(n, title, ok, detail):
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append((n, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
