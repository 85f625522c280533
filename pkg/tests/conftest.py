import warnings

import numpy as np
import pytest

from spodrom.exceptions import RankWarning


def pytest_configure(config):
    warnings.simplefilter("default", RankWarning)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_field(rng):
    """Random-phase travelling waves plus noise, ``M=24`` points by 400 snapshots."""
    m, nt = 24, 400
    x = np.linspace(0.0, 1.0, m)[:, None]
    t = np.arange(nt)[None, :]
    q = np.zeros((m, nt))
    for k, f in enumerate((0.03, 0.07, 0.11, 0.19)):
        q += (1.0 / (k + 1)) * np.cos(2 * np.pi * (f * t - (k + 1) * x) + rng.uniform(0, 2 * np.pi))
    q += 0.05 * rng.standard_normal((m, nt))
    return q - q.mean(axis=1, keepdims=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
