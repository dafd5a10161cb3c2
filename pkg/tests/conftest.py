"""Collects one pass/fail line per acceptance criterion and prints them at the end of the run."""

import pytest

_RESULTS = {}


class AcceptanceLog:
    def record(self, criterion: str, passed, detail: str):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _RESULTS[criterion] = (status, detail)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS, key=lambda s: (len(s.split()[0]), s)):
        status, detail = _RESULTS[name]
        terminalreporter.write_line(f"{status}  {name}: {detail}")
