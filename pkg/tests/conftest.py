import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from roadfield import CouplingParams, DomainGeometry, RoadNetwork, build_system, triangulate

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def square():
    return DomainGeometry.unit_square()


@pytest.fixture(scope="session")
def mid_road():
    return RoadNetwork.segment((0.0, 0.5), (1.0, 0.5), [True, True])


@pytest.fixture(scope="session")
def cross_road():
    c = (0.5, 0.5)
    pts = [c, (0.75, 0.5), (0.25, 0.5), (0.5, 0.75), (0.5, 0.25)]
    return RoadNetwork(pts, [(0, 1), (0, 2), (0, 3), (0, 4)])


@pytest.fixture(scope="session")
def small_system(square, mid_road):
    mesh = triangulate(square, mid_road, 1 / 8)
    return build_system(mesh, CouplingParams(1.0, 2.0, 1.5, 0.7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
