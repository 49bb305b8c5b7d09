import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one status line per acceptance criterion; printed at the end of the session."""
    def record(number: int, title: str, passed: bool, detail: str, expected_failure: bool = False) -> None:
        status = "PASS" if passed else ("FAIL (expected)" if expected_failure else "FAIL")
        line = f"criterion {number:2d}  {status:<15} {title}: {detail}"
        _CRITERIA[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])
