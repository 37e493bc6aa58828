import numpy as np
import pytest

from tvdingarch.model import ModelParams, simulate
from tvdingarch.pool import child_rng

# (beta0, beta1, beta2, alpha0, alpha1, alpha2)
SETTING_I = ModelParams(15.0, 0.2, 0.25, 0.5, 0.1, 0.3)
SETTING_II = ModelParams(3.0, 0.3, 0.15, 0.1, 0.2, 0.3)

_ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def stationary_start(p):
    lam = p.beta0 / (1 - p.beta1 - p.beta2)
    return lam, (p.alpha0 + p.alpha1 * lam) / (1 - p.alpha2)


def sim(p, n, seed, burnin=200):
    return simulate(p, n, *stationary_start(p), child_rng(seed, 0), burnin=burnin)


@pytest.fixture(scope="session")
def setting2_series():
    y, path = sim(SETTING_II, 1000, 2024)
    return y, path


@pytest.fixture(scope="session")
def setting1_series():
    y, path = sim(SETTING_I, 500, 77)
    return y, path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
