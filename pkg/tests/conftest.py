import time

import pytest

_LINES: list[str] = []


class Criterion:
    """Times one acceptance criterion and records its one-line verdict."""

    def __init__(self, number: int, name: str, limit: float | None):
        self.number, self.name, self.limit = number, name, limit
        self.began = time.perf_counter()

    def done(self, ok: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.began
        in_time = self.limit is None or elapsed < self.limit
        budget = "" if self.limit is None else f" / {self.limit:g}s"
        verdict = "PASS" if ok and in_time else "FAIL"
        line = f"[{self.number}] {verdict} {self.name}: {detail} ({elapsed:.1f}s{budget})"
        _LINES.append(line)
        print(line)
        return ok and in_time


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_LINES, key=lambda l: int(l[1:l.index("]")])):
            terminalreporter.write_line(line)
