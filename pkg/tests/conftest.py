import pytest

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; printed as one line per criterion at the end of the run."""

    def record(criterion, passed, detail):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        print(_line(criterion, passed, detail))
        return passed

    return record


def _line(criterion, passed, detail):
    return f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(_line(criterion, passed, detail))
