import numpy as np
import pytest

from hexid import joints, kinematics


@pytest.fixture(scope="session")
def geom():
    return kinematics.default_geometry()


@pytest.fixture(scope="session")
def table():
    return joints.default_table(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion in the terminal summary
_CRITERIA = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[name] = report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_CRITERIA):
        _, _, num, *words = name.split("_")
        status = "PASS" if _CRITERIA[name] else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {' '.join(words):<34} {status}")
