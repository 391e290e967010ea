import pytest

# (criterion number, name, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def acceptance_report():
    def report(number, name, passed, detail=""):
        ACCEPTANCE.append((number, name, bool(passed), detail))
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {name}: {detail}")
