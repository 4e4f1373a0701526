import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chiralres.optimizer import minimize_time  # noqa: E402

_OPTIMA: dict = {}
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def optimum():
    """``minimize_time(s)`` with default settings, computed once per session."""

    def get(s: float):
        if s not in _OPTIMA:
            _OPTIMA[s] = minimize_time(s)
        return _OPTIMA[s]

    return get


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
