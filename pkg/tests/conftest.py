"""Pytest configuration: shorter test ids and shared geometries."""

import numpy as np
import pytest

from capillary_lab.grid import RadialGrid
from capillary_lab.warped_geometry import build_geometry

RHO0 = np.pi / 3


def pytest_itemcollected(item):
    """Customize test node IDs for shorter output."""
    test_name = item.name
    if test_name.startswith("test_"):
        test_name = test_name[5:]
    item._nodeid = test_name


@pytest.fixture(scope="session")
def round_geo():
    """Round sphere slab t in [pi/6, 5pi/6] with the constant profile rho = pi/3."""
    return build_geometry("round", profile_params={"rho0": RHO0})


@pytest.fixture(scope="session")
def round_metric(round_geo):
    return round_geo.metric()


@pytest.fixture
def grid():
    return RadialGrid(32)
