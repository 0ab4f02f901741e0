import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records one acceptance line."""

    def record(k, ok, detail=""):
        _LINES[k] = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_LINES):
            terminalreporter.write_line(_LINES[k])
