import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Print and record one acceptance line, then assert on it."""

    def emit(number, title, ok, detail):
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        print(line)
        _LINES.append(line)
        assert ok, detail

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
