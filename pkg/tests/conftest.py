import pytest

_RESULTS: list[str] = []


class AcceptanceRecorder:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, cid: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {cid}: {detail}"
        _RESULTS.append(line)
        print(line)
        return passed


@pytest.fixture
def acceptance() -> AcceptanceRecorder:
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
