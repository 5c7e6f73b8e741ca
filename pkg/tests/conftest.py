import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record the verdict line of one acceptance criterion; printed at session end."""

    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = f"C{number:<2} {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[n].splitlines():
            terminalreporter.write_line(line)
