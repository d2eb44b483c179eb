import numpy as np
import pytest

from h22cascade.hier_graph import HierParams, build_level_graph


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def level1():
    return build_level_graph(HierParams(1.0, 2.0, 1))


@pytest.fixture
def level2():
    return build_level_graph(HierParams(1.0, 2.0, 2))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
