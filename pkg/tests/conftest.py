"""Shared pytest wiring.

The acceptance tests append one status line per criterion to
``acceptance_lines``; the terminal-summary hook replays them after the run
so the pass/fail ledger is visible without -s.
"""

import pytest

acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log() -> list[str]:
    return acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
