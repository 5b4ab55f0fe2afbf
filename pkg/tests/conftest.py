"""Shared pytest plumbing.

The acceptance suite records one verdict line per criterion in
``ACCEPTANCE_LINES`` before asserting; this hook replays them after the
normal summary so a plain ``pytest -v`` shows the table even though output
capture swallows the in-test prints.
"""

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
