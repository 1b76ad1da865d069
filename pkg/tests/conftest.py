"""Shared test plumbing.

The acceptance tests record one pass/fail line per criterion; the hook
below replays them in the terminal summary so the quantitative margins
are visible even when every test passes.
"""

import pytest

_LINES = []


@pytest.fixture
def criterion_line():
    """Record `criterion N: PASS/FAIL  detail` and assert the verdict."""

    def record(num, ok, detail):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
