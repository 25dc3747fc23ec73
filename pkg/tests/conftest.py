import time

import pytest

_CRITERIA: dict[int, tuple[bool, str, float]] = {}


class Recorder:
    def __init__(self, number: int):
        self.number = number
        self.t0 = time.perf_counter()

    def __call__(self, ok: bool, detail: str):
        elapsed = time.perf_counter() - self.t0
        ok = bool(ok)
        _CRITERIA[self.number] = (ok, detail, elapsed)
        print(f"\nCRITERION {self.number:2d}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}")
        assert ok, f"criterion {self.number}: {detail}"


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    return Recorder(marker.args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail, elapsed = _CRITERIA[n]
        terminalreporter.write_line(f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}")
