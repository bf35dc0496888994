import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from minimax_bvp.observer import ObservationSystem  # noqa: E402
from minimax_bvp.ode import Grid  # noqa: E402

TWO_PI = 2 * math.pi


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by the test")
    config._criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, text = marker
    results = _CRITERIA.setdefault(number, [text, True])
    results[1] = results[1] and report.passed


_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, passed = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}")


@pytest.fixture
def integrator_system():
    """x1' = x1, x2' = x1 with the first component observed."""
    return ObservationSystem.from_strings(
        [["1", "0"], ["1", "0"]], [["1", "0"], ["0", "1"]], [["1", "0"], ["0", "0"]], TWO_PI
    )


@pytest.fixture
def oscillator_system():
    return ObservationSystem.from_strings(
        [["0", "-1"], ["1", "0"]],
        [["1", "0"], ["0", "1"]],
        [["cos(t)/20", "sin(t)/20"], ["cos(t)/2", "sin(t)/2"]],
        TWO_PI,
    )


@pytest.fixture
def grid512():
    return Grid(TWO_PI, 512)


@pytest.fixture
def grid2048():
    return Grid(TWO_PI, 2048)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
