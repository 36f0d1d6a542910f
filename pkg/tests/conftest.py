import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert it."""

    def record(name, ok, detail):
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
