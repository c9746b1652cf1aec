import numpy as np
import pytest

from rbmo_lab.measure import CantorFourCorner, TwoScale, UniformGrid, build_measure


@pytest.fixture(scope="session")
def m1():
    return build_measure(UniformGrid(0.0, 1.0, 256))


@pytest.fixture(scope="session")
def m1_plane():
    return build_measure(UniformGrid(0.0, 1.0, 256, ambient_dim=2))


@pytest.fixture(scope="session")
def cantor3():
    return build_measure(CantorFourCorner(3))


@pytest.fixture(scope="session")
def two_scale():
    return build_measure(TwoScale())


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
