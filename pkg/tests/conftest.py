import sys

import numpy as np
import pytest

from chanode.channel import ChannelScenario, ObservationConfig, build_dataset
from chanode.network import NetConfig, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return NetConfig(N=4, M=2, Tu=4, Td=3, L=6)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=7)


@pytest.fixture(scope="session")
def tiny_dataset():
    scenario = ChannelScenario(N=4, Tu=4, Td=3)
    return build_dataset(scenario, ObservationConfig(r=0.5, snr_db=20.0), 40, seed=3)


def pytest_terminal_summary(terminalreporter):
    lines = [line for name, mod in list(sys.modules.items()) if name.endswith("test_acceptance")
             for line in getattr(mod, "RESULTS", [])]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
