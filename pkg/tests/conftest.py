"""Shared fixtures: the reference lowpass design is expensive, so it is
solved once per session and reused by every test that needs a realistic
high-order loop filter."""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from dsmx.design import BandSpec, DesignSpec, DesignResult, design

# pass/fail lines registered by the acceptance tests, echoed at the end of
# the run so they are visible without -s
ACCEPTANCE_LINES = []


@dataclass
class TimedDesign:
    result: DesignResult
    elapsed: float


@pytest.fixture(scope="session")
def flagship():
    """Order-32 lowpass design, band [0, pi/32], per-stage cap sqrt(1.5).

    The cascade of two such stages is the reference modulator used by the
    reproduction tests; the wall time is recorded for the runtime criterion.
    """
    spec = DesignSpec(
        order=32,
        bands=(BandSpec(0.0, np.pi / 32),),
        hinf_cap=np.sqrt(1.5),
    )
    start = time.perf_counter()
    result = design(spec)
    elapsed = time.perf_counter() - start
    assert result.status == "Optimal"
    return TimedDesign(result=result, elapsed=elapsed)


@pytest.fixture
def record():
    """Register a one-line verdict for a numbered acceptance criterion."""

    def _record(num: int, ok: bool, detail: str) -> None:
        word = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {num:2d}: {word} ({detail})")
        assert ok, f"criterion {num}: {detail}"

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
