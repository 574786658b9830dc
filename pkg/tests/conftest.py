"""Shared pytest plumbing: collects acceptance-criterion result lines."""

acceptance_lines = []


def record_criterion(line: str) -> None:
    acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.line(line)
