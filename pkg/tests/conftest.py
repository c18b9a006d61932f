import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gnet.core import NetworkSpec

settings.register_profile("gnet", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gnet")


def chain_spec(lam=0.5):
    """1 -> 2 -> 3 with w+12 = w-12 = 1, w+23 = 2 and output rate 1."""
    wp = np.zeros((3, 3))
    wm = np.zeros((3, 3))
    wp[0, 1] = 1.0
    wm[0, 1] = 1.0
    wp[1, 2] = 2.0
    return NetworkSpec.build(("input", "hidden", "output"), wp, wm, r_output=1.0), np.array([lam])


def loop_spec(lam=(1.0, 1.0)):
    """Two output neurons exciting each other, rates 2 and d = 0.5."""
    wp = np.array([[0.0, 1.0], [1.0, 0.0]])
    return NetworkSpec.build(("output", "output"), wp, np.zeros((2, 2)), r_output=2.0,
                             lambda_plus=np.asarray(lam, dtype=float))


@pytest.fixture
def chain():
    return chain_spec()[0]


@pytest.fixture
def loop():
    return loop_spec()


_VERDICTS = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_criterion_" not in report.nodeid:
        return
    detail = dict(report.user_properties).get("detail", "")
    doc = report.nodeid.split("test_criterion_")[1]
    number, _, name = doc.partition("_")
    verdict = "PASS" if report.passed else "FAIL"
    _VERDICTS.append(f"[{verdict}] criterion {int(number)} {name.replace('_', ' ')}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
