"""Shared test plumbing: the acceptance battery reports one line per
criterion in the terminal summary, where capture cannot swallow it."""

ACCEPTANCE_LINES = []


def record_acceptance(name: str, passed: bool, details: str):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] {name}: {details}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
