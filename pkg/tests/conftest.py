import numpy as np
import pytest

from coopnoma import NetworkConfig


def zscore(value, est):
    """|analytic - MC| in MC standard errors; a zero-variance estimate must match exactly."""
    if est.std_error == 0:
        return 0.0 if abs(value - est.mean) < 1e-12 else np.inf
    return abs(value - est.mean) / est.std_error


@pytest.fixture
def defaults():
    return NetworkConfig()


@pytest.fixture
def cfg30():
    return NetworkConfig(p_over_sigma2=1e3)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
