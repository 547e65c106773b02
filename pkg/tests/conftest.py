from __future__ import annotations

import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one summary line; all lines are echoed at the end of the run."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def record(text: str):
        lines.append(text)
        print(text)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
