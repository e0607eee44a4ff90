import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line: criterion number, pass flag, detail."""
    def record(n, ok, detail):
        _VERDICTS.append((n, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance")
    for n, ok, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
