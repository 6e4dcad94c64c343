import time

import pytest

from qtube.config import grating_preset, tunnel_preset
from qtube.experiments import run_grating, run_tunneling

_VERDICTS = {}


@pytest.fixture(scope="session")
def tunnel_report():
    t0 = time.perf_counter()
    report = run_tunneling(tunnel_preset())
    report.wall_time = time.perf_counter() - t0
    return report


@pytest.fixture(scope="session")
def grating_report():
    return run_grating(grating_preset())


@pytest.fixture
def verdict():
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
