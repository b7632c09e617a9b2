import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from StAlloc.pointprocess import Region, CenterSet, TORUS, BOX
from StAlloc.allocation import Grid


@pytest.fixture
def small_torus():
    return Region(2, (4.0, 4.0), TORUS)


@pytest.fixture
def small_box():
    return Region(2, (4.0, 4.0), BOX)


@pytest.fixture
def two_centers_with_tie():
    """Two centers on a dyadic grid, equidistant from the cell between them"""
    region = Region(2, (2.0, 2.0), BOX)
    grid = Grid(region, 0.125)
    centers = CenterSet(region, [[0.3125, 0.3125], [0.5625, 0.3125]], 1.0)
    return centers, grid
