import numpy as np
import pytest

from g2duct.mesh import CROSSED, RIGHT, DuctGeometry, build_base_mesh, duct_mesh


@pytest.fixture(scope="session")
def geom():
    return DuctGeometry(1.0, 1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def base_mesh(geom):
    return build_base_mesh(geom, 2, CROSSED)


@pytest.fixture(scope="session")
def coarse_mesh(geom):
    """Small boundary- and corner-refined duct mesh for solver tests."""
    return duct_mesh(geom, 2, CROSSED, 0, 3, 4)


@pytest.fixture(scope="session")
def right_mesh(geom):
    return build_base_mesh(geom, 1, RIGHT)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def long_geom():
    """Duct with a three-unit outlet section."""
    return DuctGeometry(1.0, 3.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def long_mesh(long_geom):
    return duct_mesh(long_geom, 2, CROSSED, 0, 3, 4)
