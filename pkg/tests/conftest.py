import pytest

_CRITERIA = []


@pytest.fixture(scope="session")
def criteria():
    """Shared list of one-line PASS/FAIL verdicts, echoed in the terminal summary."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
