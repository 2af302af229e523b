import numpy as np
import pytest

from cisim.models import CIR2D, SV, ConstantCoeff, LogCIR2D, OU1D


def within(estimate, stderr, truth, k=4.0):
    """Monte Carlo agreement: |estimate - truth| <= k * stderr."""
    return abs(estimate - truth) <= k * stderr


@pytest.fixture
def sv():
    return SV(1.0, 0.5)


@pytest.fixture
def ou():
    return OU1D(0.5, 1.0, 0.4)


@pytest.fixture
def cir():
    return CIR2D()


@pytest.fixture
def logcir():
    return LogCIR2D()


@pytest.fixture
def const2():
    return ConstantCoeff([0.3, -0.2], [[1.0, 0.0], [0.4, 0.8]])


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def _report(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
