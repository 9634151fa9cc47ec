import numpy as np
import pytest

from sinkmatch import ingest_set

ACCEPTANCE_LINES = []


def unit_rows(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_set(rng, k, d, sample_id=None):
    return ingest_set(rng.normal(size=(k, d)), sample_id=sample_id)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        status = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES.append(f"{status}  {marker.args[0]}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
