import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from codecstream.synth import synthesize_trace  # noqa: E402


@pytest.fixture
def small_trace():
    return synthesize_trace([(2.0, 4.0, 3000), (2.0, 1.0, 300)], fps=10, width=96, height=64, seed=3)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
