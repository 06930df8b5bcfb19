"""Collects acceptance-criterion verdicts and prints them after the run."""
import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """``criterion(name, passed, detail)`` records a verdict and prints it."""

    def record(name: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        print(line)
        _VERDICTS.append((name, passed, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in _VERDICTS:
        terminalreporter.write_line(line)
