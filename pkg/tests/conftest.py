import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def _criterion(nodeid):
    name = nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in nodeid or not name.startswith("test_c"):
        return None
    return int(name.split("_")[1][1:])


@pytest.fixture
def record():
    """Store a one-line verdict for an acceptance criterion."""
    def _record(number, ok, detail):
        _CRITERIA[number] = ("PASS" if ok else "FAIL", detail)
    return _record


def pytest_runtest_logreport(report):
    number = _criterion(report.nodeid)
    if number is None or number in _CRITERIA:
        return
    if report.skipped:
        _CRITERIA[number] = ("SKIP", "extended training run, set FIELDNAV_EXTENDED=1")
    elif report.failed:
        crash = getattr(report.longrepr, "reprcrash", None)
        _CRITERIA[number] = ("FAIL", crash.message.splitlines()[0] if crash else "error")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
