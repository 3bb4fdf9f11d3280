import pytest

import _report
from epicontrol.kernel import build_kernel


@pytest.fixture(scope="session")
def kernel():
    return build_kernel()


def pytest_terminal_summary(terminalreporter):
    if any(_report._parts.values()):
        terminalreporter.section("acceptance criteria")
        for line in _report.lines():
            terminalreporter.write_line(line)
