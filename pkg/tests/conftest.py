"""Shared test plumbing.

The acceptance tests record one line per criterion; the hook below prints
them after the run so the verdicts are visible regardless of capture mode.
"""

ACCEPTANCE_LINES: list[tuple[bool, str]] = []


def record_acceptance(passed: bool, line: str) -> None:
    ACCEPTANCE_LINES.append((passed, line))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for passed, line in ACCEPTANCE_LINES:
        terminalreporter.write_line(("PASS  " if passed else "FAIL  ") + line)
