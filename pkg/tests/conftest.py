"""Shared fixtures and the acceptance-criterion reporter.

Acceptance tests register one line per criterion; the terminal summary
prints them all, pass or fail, regardless of capture settings.
"""

import pytest

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    _CRITERIA.append((name, bool(ok), detail))
    assert ok, f"acceptance criterion failed: {name} ({detail})"


@pytest.fixture(scope="session")
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in _CRITERIA:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
