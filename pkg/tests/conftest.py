import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """Register the one-line verdict of an acceptance criterion (printed in the terminal summary)."""

    def _record(number: int, passed: bool, text: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {text}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
