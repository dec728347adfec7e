import os

import numpy as np
import pytest

from quasiduality.arithmetic import golden_mean, silver_mean
from quasiduality.operators import almost_mathieu


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    os.environ["QUASI_CACHE_DIR"] = str(tmp_path_factory.mktemp("cache"))
    yield


@pytest.fixture(scope="session")
def golden():
    return golden_mean()


@pytest.fixture(scope="session")
def silver():
    return silver_mean()


@pytest.fixture(scope="session")
def amo_half():
    return almost_mathieu(0.5)


@pytest.fixture(scope="session")
def amo_two():
    return almost_mathieu(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", "call") == "call":
                lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
