import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; the lines are echoed in the terminal summary."""

    def add(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})"
        _LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
