import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fuzzyflow.core import ConnectionRecord, FlowKey

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def make_record(src="10.0.0.1", dst="10.0.0.2", ts=0.0, **kw):
    kw.setdefault("src_port", 40000)
    kw.setdefault("dst_port", 80)
    kw.setdefault("l4", "tcp")
    return ConnectionRecord(key=FlowKey(src, dst, ts), **kw)


@pytest.fixture
def rec():
    return make_record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append ``(criterion, passed, detail)``; lines are echoed in the terminal summary."""
    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
