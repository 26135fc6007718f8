"""Shared test configuration: collects acceptance one-liners and prints them
at the end of the run so they survive output capture."""

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(
        f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} — {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
