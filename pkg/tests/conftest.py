import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from robusthedge.marginals import MarginalDistribution, MarketSpec  # noqa: E402


@pytest.fixture
def coupling_market():
    """delta_100 then uniform{80,120}: the martingale coupling is unique."""
    return MarketSpec.of(100.0, MarginalDistribution.dirac(100.0), MarginalDistribution.uniform([80.0, 120.0]))


@pytest.fixture
def two_date_market():
    return MarketSpec.of(
        100.0, MarginalDistribution.uniform([90.0, 110.0]), MarginalDistribution.uniform([80.0, 100.0, 120.0])
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _CRITERIA.get(marker, "passed")
        _CRITERIA[marker] = report.outcome if prev == "passed" else prev


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result()._criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), outcome in sorted(_CRITERIA.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num}: {title}")
