import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Lines collected by the acceptance tests, echoed in the summary."""
    log = getattr(request.config, "_acceptance_lines", None)
    if log is None:
        log = request.config._acceptance_lines = []
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
