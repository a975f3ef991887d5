import csv
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from helisparse.geometry import HelixGeometry

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def geom():
    """Reconstruction-experiment scanner: R=2, h=0.2, Z=0.4, rho=0.5."""
    return HelixGeometry(2.0, 0.2, 0.4, 0.5)


@pytest.fixture
def geom_wide():
    """Support-experiment scanner: R=2.5, h=0.4, Z=1, rho=0.5."""
    return HelixGeometry(2.5, 0.4, 1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



@pytest.fixture(scope="session")
def exp2_run(tmp_path_factory):
    """The exp2 preset pushed through scan, filter, recon and compare once per session."""
    from helisparse.cli import main

    out = str(tmp_path_factory.mktemp("exp2"))
    start = time.perf_counter()
    for cmd in ("scan", "filter", "recon", "compare"):
        assert main([cmd, "--preset", "exp2", "--out-dir", out, "--seed", "0"]) == 0
    elapsed = time.perf_counter() - start
    return out, _read_report(f"{out}/scan_report.csv"), _read_report(f"{out}/metrics.csv"), elapsed


def _read_report(path):
    with open(path) as fh:
        return {k: float(v) for k, v in list(csv.reader(fh))[1:]}


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    detail = getattr(item, "criterion_detail", "")
    _CRITERIA[mark.args[0]] = (mark.args[1], report.outcome, report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcome, secs, detail = _CRITERIA[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {verdict}  {secs:7.1f} s  {title}  {detail}".rstrip())
