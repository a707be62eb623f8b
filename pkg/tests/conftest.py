import numpy as np
import pytest

from gaussqc.gaussian import random_physical_state

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Register the outcome of one acceptance criterion for the summary;
    ``passed=None`` marks an informational (non-gating) entry."""
    status = "INFO" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def random_states():
    """1000 seeded random physical states."""
    rng = np.random.default_rng(20240601)
    return [random_physical_state(rng) for _ in range(1000)]
