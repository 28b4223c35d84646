import pytest

# (criterion id, passed, detail) lines printed after the run
CRITERIA = []


def record(criterion, passed, detail=""):
    CRITERIA.append((criterion, bool(passed), detail))
    return passed


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{cid}: {'PASS' if ok else 'FAIL'}  {detail}")
