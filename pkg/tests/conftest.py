import pytest

_ACCEPTANCE = {}


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(label, ok, detail):
        _ACCEPTANCE[label] = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(_ACCEPTANCE[label])
