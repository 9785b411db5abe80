import numpy as np
import pytest

from csipred.channel import ChannelConfig, generate_sinr_grid
from csipred.link import build_trace, load_cqi_table


@pytest.fixture(scope="session")
def table():
    return load_cqi_table()


@pytest.fixture(scope="session")
def small_trace(table):
    cfg = ChannelConfig(doppler_hz=10.0, n_slots=4000, n_rb=12, seed=3)
    return build_trace(generate_sinr_grid(cfg), table)


def ar1(rho, n, seed=0):
    """Unit-variance stationary AR(1) sample path."""
    rng = np.random.default_rng(seed)
    e = rng.normal(scale=np.sqrt(1 - rho * rho), size=n)
    x = np.empty(n)
    x[0] = rng.normal()
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    return x


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
