import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Print and keep a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
