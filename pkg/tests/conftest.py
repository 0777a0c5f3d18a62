import numpy as np
import pytest

from supcomm.core import NetworkSample


def random_networks(rng, N, n):
    A = rng.standard_normal((N, n, n))
    A = A + np.swapaxes(A, 1, 2)
    A[:, np.arange(n), np.arange(n)] = 0.0
    return A


def random_sample(rng, N=30, n=6, task="regression"):
    A = random_networks(rng, N, n)
    if task == "regression":
        y = rng.standard_normal(N)
    else:
        y = np.where(rng.random(N) < 0.5, -1.0, 1.0)
        y[:2] = (-1.0, 1.0)
    return NetworkSample(A, y, task=task)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[props["criterion"]] = (report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria):
        outcome, detail = _criteria[key]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {key}: {verdict}  {detail}")
