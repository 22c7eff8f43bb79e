import pytest

_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    """Callable recording one PASS/FAIL line per acceptance criterion."""

    def record(number, passed, detail):
        _LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
