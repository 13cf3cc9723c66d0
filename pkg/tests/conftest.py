import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a PASS/FAIL line, then asserts."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
