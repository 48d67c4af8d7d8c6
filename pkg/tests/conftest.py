import pytest

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def record():
    """Log one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def _record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
    passed = sum(line.startswith("[PASS]") for line in _ACCEPTANCE.values())
    terminalreporter.write_line(f"{passed}/{len(_ACCEPTANCE)} criteria passed")
