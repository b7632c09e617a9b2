import numpy as np
import pytest

from StAlloc.pointprocess import Region, CenterSet, TORUS, BOX, sample_poisson, rescale
from StAlloc.allocation import Grid, compute_allocation
from StAlloc.boolean_model import *


def test_radius_and_equivalent_parameters():
    assert boolean_radius(0.8, 2) == pytest.approx(0.50463, abs=1e-5)
    assert boolean_radius(np.pi, 2) == pytest.approx(1.0)

    params = equivalent_boolean_params(1.0, 2)
    assert params.intensity == pytest.approx(4.0 / np.pi)
    assert params.radius == 0.5

    with pytest.raises(ValueError):
        equivalent_boolean_params(0.0, 2)
    with pytest.raises(ValueError):
        BooleanParams(1.0, -1.0)


def test_single_center_disk():
    region = Region(2, (4.0, 4.0), BOX)
    grid = Grid(region, 0.05)
    centers = CenterSet(region, [[2.0, 2.0]], 1.0)
    radius = boolean_radius(0.8, 2)

    mask = boolean_mask(centers, radius, grid)
    expected = grid.all_distances(centers.coords[0]).reshape(grid.shape) <= radius
    assert np.array_equal(mask, expected)


def test_torus_coverage_wraps():
    region = Region(2, (4.0, 4.0), TORUS)
    grid = Grid(region, 0.5)
    mask = boolean_mask(CenterSet(region, [[0.1, 0.1]], 1.0), 0.5, grid)

    assert mask[0, 0] and mask[7, 7] and mask[0, 7]
    assert not mask[3, 3]


def test_mask_is_monotone():
    region = Region(2, (5.0, 5.0), TORUS)
    grid = Grid(region, 0.1)
    centers = sample_poisson(region, 1.0, 2)

    small = boolean_mask(centers, 0.3, grid)
    large = boolean_mask(centers, 0.5, grid)
    fewer = boolean_mask(centers.subset(np.arange(len(centers)) % 2 == 0), 0.5, grid)

    assert not np.any(small & ~large)
    assert not np.any(fewer & ~large)
    with pytest.raises(ValueError):
        boolean_mask(centers, 0.0, grid)


@pytest.mark.parametrize('seed', range(3))
def test_rescaled_boolean_model_matches(seed):
    region = Region(2, (8.0, 8.0), BOX)
    centers = sample_poisson(region, 1.0, seed)
    mask = boolean_mask(centers, 1.0, Grid(region, 0.25))

    params = equivalent_boolean_params(np.pi, 2)
    small = rescale(centers, 0.5)
    assert small.intensity == pytest.approx(params.intensity)
    assert np.array_equal(boolean_mask(small, params.radius, Grid(small.region, 0.125)), mask)


@pytest.mark.parametrize('topology', [TORUS, BOX])
@pytest.mark.parametrize('alpha', [0.5, 1.0, 1.5])
@pytest.mark.parametrize('seed', range(2))
def test_allocation_dominates_boolean_model(topology, alpha, seed):
    region = Region(2, (5.0, 5.0), topology)
    centers = sample_poisson(region, 1.0, seed)
    alloc = compute_allocation(centers, Grid(region, 0.1), alpha)

    assert domination_check(alloc, centers) == []


@pytest.mark.slow
def test_domination_many_realizations():
    rng = np.random.default_rng(4)
    for k in range(100):
        region = Region(2, (10.0, 10.0), (TORUS, BOX)[k % 2])
        centers = sample_poisson(region, float(rng.uniform(0.2, 2.0)), k)
        alpha = float(rng.uniform(0.2, 1.5))
        alloc = compute_allocation(centers, Grid(region, 0.1), alpha)

        assert domination_check(alloc, centers) == []
