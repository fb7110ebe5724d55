"""Shared fixtures: the acceptance-criterion line recorder.

Each acceptance test reports one human-readable summary line through the
`criterion` fixture; the collected lines are echoed in a section at the
end of the pytest run so the verdict survives output capture.
"""

import pytest

_LINES = []


@pytest.fixture
def criterion():
    def record(num: int, ok: bool, detail: str) -> bool:
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})"
        _LINES.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
