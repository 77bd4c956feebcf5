"""Test-session plumbing: acceptance criterion lines in the terminal summary."""

ACCEPTANCE_LINES = []


def record(line: str):
    """Remember an acceptance line and echo it immediately."""
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
