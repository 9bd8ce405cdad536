import numpy as np
import pytest

from epictrl.graph import karate
from epictrl.temporal import REFERENCE_RATES, amei_karate, markov_karate


@pytest.fixture(scope="session")
def kg():
    return karate()


@pytest.fixture(scope="session")
def mk():
    return markov_karate(**REFERENCE_RATES)


@pytest.fixture(scope="session")
def ak():
    return amei_karate(**REFERENCE_RATES)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """Collects one summary line per acceptance criterion."""

    def record(k, passed, detail, seconds, limit):
        ok = passed and seconds < limit
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f} s, limit {limit:g} s]"
        _ACCEPTANCE.append((k, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
