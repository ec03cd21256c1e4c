import numpy as np
import pytest

from cadkit import geometry as geo
from cadkit.dyadic import build_grid


@pytest.fixture(scope="session")
def disk():
    return geo.disk(256)


@pytest.fixture(scope="session")
def square():
    return geo.unit_square()


@pytest.fixture(scope="session")
def halfplane():
    return geo.half_plane_box(8.0, 16.0)


@pytest.fixture(scope="session")
def lipschitz():
    return geo.lipschitz_graph_domain()


@pytest.fixture(scope="session")
def cusp():
    return geo.cusp_domain()


@pytest.fixture(scope="session")
def koch():
    return geo.koch_snowflake(3)


@pytest.fixture(scope="session")
def disk_grid(disk):
    return build_grid(disk, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
