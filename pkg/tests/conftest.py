import numpy as np
import pytest
from hypothesis import settings

from lenia_qd.harness.pattern import read_pattern
from lenia_qd.sim import KernelBank, SimConfig

import acceptance_log

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo_pattern():
    return read_pattern("demo")


@pytest.fixture(scope="session")
def desk_sim():
    return SimConfig(space_resolution=8, world_height=64, world_width=64, steps=50)


@pytest.fixture(scope="session")
def desk_bank(demo_pattern, desk_sim):
    return KernelBank.build(demo_pattern.kernels, desk_sim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
