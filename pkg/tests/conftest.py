import numpy as np
import pytest
from hypothesis import settings

from phasor_nlos.geometry import ApertureGrid, ReconGeometry

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return ApertureGrid(8, 8, 1.0)


@pytest.fixture
def small_geom():
    return ReconGeometry(8, 8, 8, 0.3, 1.1)


# one line per acceptance criterion, echoed in the terminal summary
VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        VERDICTS[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])
