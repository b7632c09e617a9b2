import numpy as np
import pytest

from StAlloc.pointprocess import Region, CenterSet, TORUS, BOX, sample_poisson
from StAlloc.allocation import Grid, compute_allocation, claimed_set, make_allocation
from StAlloc.majorant import *
from StAlloc.evaluation import mc_sigma

from oracles import brute_R, brute_painted, flood_fill, lattice_rho2


def test_dimension_constants():
    assert pi_d(2) == pytest.approx(np.pi)
    assert pi_d(3) == pytest.approx(4.0 * np.pi / 3.0)
    assert beta_d(2) == 9
    assert beta_d(3) == 9
    with pytest.raises(ValueError):
        beta_d(1)


def test_lattice_shapes():
    assert CubeLattice(Region(2, (12.0, 7.0), TORUS)).shape == (12, 7)
    assert CubeLattice(Region(2, (4.0, 3.2), BOX)).shape == (5, 4)
    with pytest.raises(ValueError):
        CubeLattice(Region(2, (4.5, 4.0), TORUS))


def test_lattice_distances_wrap():
    lattice = CubeLattice(Region(2, (10.0, 10.0), TORUS))
    assert lattice.rho2((0, 0), (9, 0)) == 0
    assert lattice.rho2((0, 0), (3, 4)) == 4 + 9
    assert lattice.rho2((0, 0), (7, 0)) == 4
    assert np.array_equal(lattice.index_of([[9.6, 0.4]]), [[0, 0]])


def test_discrete_ball():
    lattice = CubeLattice(Region(2, (20.0, 20.0), TORUS))
    assert len(discrete_ball((0, 0), 0.0, lattice)) == 0
    assert len(discrete_ball((0, 0), 0.5, lattice)) == 9
    # rho <= 1 adds the face neighbours at gap 1
    assert len(discrete_ball((5, 5), 1.0, lattice)) == 21

    box = CubeLattice(Region(2, (20.0, 20.0), BOX))
    assert len(discrete_ball((0, 0), 0.5, box)) == 4


def test_isolated_center():
    region = Region(2, (30.0, 30.0), TORUS)
    centers = CenterSet(region, [[0.2, 0.1]], 1.0)
    zeta = zeta_field(centers)

    assert zeta.total == 1
    assert compute_R(zeta, (0, 0)) == pytest.approx(np.pi**-0.5)
    assert compute_R(zeta, (5, 5)) == 0.0

    painted = painted_set(compute_R_field(zeta))
    assert painted.mask.sum() == 9
    assert painted.mask[29, 29] and painted.mask[1, 1] and painted.mask[0, 0]


@pytest.mark.parametrize('topology', [TORUS, BOX])
@pytest.mark.parametrize('lam', [0.3, 1.0, 3.0])
def test_R_field_against_enumeration(topology, lam):
    region = Region(2, (12.0, 12.0), topology)
    centers = sample_poisson(region, lam, 17)
    zeta = zeta_field(centers)
    R = compute_R_field(zeta)

    for i in np.argwhere(zeta.counts > 0):
        assert R.values[tuple(i)] == pytest.approx(brute_R(zeta.counts, i, region.periodic), rel=1e-9)
    assert np.all(R.values[zeta.counts == 0] == 0)


def test_R_is_an_infimum():
    region = Region(2, (15.0, 15.0), TORUS)
    zeta = zeta_field(sample_poisson(region, 2.0, 5))
    beta = beta_d(2)

    for i in np.argwhere(zeta.counts > 0)[:10]:
        R = compute_R(zeta, i)
        rho2 = lattice_rho2(zeta.lattice.shape, True, tuple(i))
        inside = lambda r: zeta.counts[rho2 <= (beta * r)**2].sum()

        assert inside(R * (1 + 1e-9)) <= np.pi * (R * (1 + 1e-9))**2
        for r in np.linspace(R / 100, R * (1 - 1e-6), 50):
            assert inside(r) > np.pi * r * r


@pytest.mark.parametrize('topology', [TORUS, BOX])
@pytest.mark.parametrize('seed', range(3))
def test_R_grows_when_centers_are_added(topology, seed):
    region = Region(2, (12.0, 12.0), topology)
    centers = sample_poisson(region, 1.0, seed)
    lattice = CubeLattice(region)
    keep = np.random.default_rng(seed).uniform(size=len(centers)) < 0.5

    fewer = compute_R_field(zeta_field(centers.subset(keep), lattice)).values
    more = compute_R_field(zeta_field(centers, lattice)).values
    assert np.all(fewer <= more * (1 + 1e-12))


@pytest.mark.parametrize('topology', [TORUS, BOX])
def test_painted_set_against_enumeration(topology):
    region = Region(2, (12.0, 12.0), topology)
    R = compute_R_field(zeta_field(sample_poisson(region, 0.5, 23)))

    assert np.array_equal(painted_set(R).mask, brute_painted(R.values, region.periodic))


def test_painted_set_rejects_infinite_radius():
    lattice = CubeLattice(Region(2, (5.0, 5.0), TORUS))
    values = np.zeros(lattice.shape)
    values[1, 1] = np.inf
    with pytest.raises(ValueError):
        painted_set(RField(lattice, values))


@pytest.mark.parametrize('seed', range(3))
def test_restricted_painted_set_is_smaller(seed):
    region = Region(2, (16.0, 16.0), BOX)
    centers = sample_poisson(region, 1.0, seed)
    full = painted_set(compute_R_field(zeta_field(centers))).mask
    restricted = painted_set_restricted(centers, ([3.0, 2.5], [11.0, 9.0]))

    assert restricted.window == ((3.0, 2.5), (11.0, 9.0))
    assert not np.any(restricted.mask & ~full)


@pytest.mark.parametrize('lam', [0.2, 0.5, 1.0])
@pytest.mark.parametrize('seed', range(2))
def test_territories_stay_in_majorant_balls(lam, seed):
    region = Region(2, (8.0, 8.0), TORUS)
    centers = sample_poisson(region, lam, seed)
    alloc = compute_allocation(centers, Grid(region, 0.1), 1.0)
    R = compute_R_field(zeta_field(centers))

    assert verify_containment(alloc, R) == []
    coarse = coarsen_claimed(claimed_set(alloc))
    assert not np.any(coarse & ~painted_set(R).mask)


@pytest.mark.slow
def test_territory_containment_many_realizations():
    region = Region(2, (50.0, 50.0), TORUS)
    grid = Grid(region, 0.25)
    for lam in (0.2, 0.5, 1.0):
        for seed in range(34):
            centers = sample_poisson(region, lam, seed)
            R = compute_R_field(zeta_field(centers))
            assert verify_containment(compute_allocation(centers, grid, 1.0), R) == []


def test_containment_flags_far_cells():
    region = Region(2, (10.0, 10.0), TORUS)
    grid = Grid(region, 0.5)
    centers = CenterSet(region, [[0.1, 0.1]], 1.0)
    owner = np.full(grid.shape, -1)
    owner[10, 10] = 0

    alloc = make_allocation(centers, grid, 1.0, owner)
    R = compute_R_field(zeta_field(centers))
    assert verify_containment(alloc, R) == [(int(np.ravel_multi_index((10, 10), grid.shape)), 0)]


@pytest.mark.parametrize('topology', [TORUS, BOX])
def test_separation(topology):
    region = Region(2, (20.0, 20.0), topology)
    R = compute_R_field(zeta_field(sample_poisson(region, 0.3, 4)))
    assert verify_separation(R) == []


def test_neighbourhood_box():
    lower, upper = neighbourhood_box((2, 2), 4.0)
    assert np.allclose(lower, [2.0, 2.0])
    assert np.allclose(upper, [14.0, 14.0])


def _brute_verdict(j, m, centers):
    # Straight recomputation of both passability conditions
    region = centers.region
    beta = beta_d(2)
    lower, upper = neighbourhood_box(j, m)
    shape = CubeLattice(region).shape

    def counts_of(pts):
        counts = np.zeros(shape, dtype=np.int64)
        for x, y in pts:
            i = min(int(np.floor(x + 0.5)), shape[0] - 1)
            k = min(int(np.floor(y + 0.5)), shape[1] - 1)
            counts[i, k] += 1
        return counts

    full = counts_of(centers.coords)
    inside = [p for p in centers.coords if np.all(p >= lower) and np.all(p <= upper)]
    restricted = counts_of(inside)

    small = True
    for a in range(int(np.ceil(lower[0])), int(np.floor(upper[0])) + 1):
        for b in range(int(np.ceil(lower[1])), int(np.floor(upper[1])) + 1):
            if brute_R(full, (a, b), False) >= m / (6.0 * (beta + 1)):
                small = False

    values = np.zeros(shape)
    for i in zip(*np.nonzero(restricted)):
        values[i] = brute_R(restricted, i, False)
    labels, count = flood_fill(brute_painted(values, False))

    c = m * np.asarray(j, dtype=float)
    big = False
    for k in range(1, count + 1):
        cells = np.argwhere(labels == k)
        extent = (cells.max(axis=0) - cells.min(axis=0) + 1).max()
        meets = np.any(np.all((cells + 0.5 >= c - m / 2.0) & (cells - 0.5 <= c + m / 2.0), axis=1))
        if extent >= m / 2.0 and meets:
            big = True

    return big, small


@pytest.mark.parametrize('lam,seed', [(0.05, 1), (0.3, 2), (1.0, 3), (0.01, 4)])
def test_passability_against_recomputation(lam, seed):
    m = 4.0
    region = Region(2, (4 * m, 4 * m), BOX)
    centers = sample_poisson(region, lam, seed)
    verdict = is_passable((2, 2), m, centers)

    assert (verdict.big_component, verdict.small_radii) == _brute_verdict((2, 2), m, centers)
    assert verdict.passable == (verdict.big_component and verdict.small_radii)


def test_large_radius_fails_small_radii_condition():
    m = 4.0
    region = Region(2, (4 * m, 4 * m), BOX)
    # Any nonempty cube has R >= pi^(-1/2), far above m / (6 (beta_d + 1))
    assert np.pi**-0.5 >= m / (6.0 * (beta_d(2) + 1))

    lone = CenterSet(region, [[8.3, 7.9]], 1.0)
    verdict = is_passable((2, 2), m, lone)
    assert not verdict.small_radii
    assert not verdict.passable

    dense = sample_poisson(region, 3.0, 8)
    verdict = is_passable((2, 2), m, dense)
    assert not verdict.small_radii
    assert not verdict.passable


def test_passability_needs_the_whole_neighbourhood():
    region = Region(2, (16.0, 16.0), BOX)
    centers = sample_poisson(region, 0.5, 1)
    with pytest.raises(ValueError):
        is_passable((0, 0), 4.0, centers)
    with pytest.raises(ValueError):
        is_passable((2, 2), 0.0, centers)


def test_no_centers_never_passable():
    p, (lo, hi) = estimate_p_m(2.0, 0.0, 5, 1)
    assert p == 0.0
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < hi < 1.0


def test_rare_centers_are_rarely_passable():
    m = 10.0
    lam = 1e-5
    # The neighbourhood of side 3m is empty with probability above 0.99
    assert np.exp(-lam * (3 * m)**2) > 0.99

    replicas = 200
    p, _ = estimate_p_m(m, lam, replicas, 5)
    assert p < 0.01 + 3 * mc_sigma(0.01, replicas)


def test_passability_correlation_structure():
    result = estimate_passability_correlation(7.0, 0.01, 4, 3)
    assert result.replicas == 4
    assert 0.0 <= result.p_joint <= min(result.p_first, result.p_second) + 1e-12
    assert result.within_3_sigma


@pytest.mark.slow
def test_passability_independence_at_separation_five():
    result = estimate_passability_correlation(7.0, 0.01, 10000, 9, workers=4)
    assert result.within_3_sigma


def test_chernoff():
    assert chernoff_g(0.5) == pytest.approx(0.38629, abs=1e-5)
    assert chernoff_tail_bound(1.0, 0.01, 2) == 1.0

    b5 = chernoff_tail_bound(5.0, 0.001, 2)
    b6 = chernoff_tail_bound(6.0, 0.001, 2)
    assert 0.0 < b6 < b5 < 1.0

    with pytest.raises(ValueError):
        chernoff_tail_bound(0.0, 0.01, 2)
    with pytest.raises(ValueError):
        chernoff_tail_bound(1.0, 0.0, 2)


def test_tail_estimate_small():
    rows = estimate_tail([1.0, 2.0], 0.01, 50, 3)
    assert [r[0] for r in rows] == [1.0, 2.0]
    assert rows[1][1] <= rows[0][1]
    for a, p, sigma, bound in rows:
        assert p <= bound + 3 * sigma


@pytest.mark.slow
def test_tail_within_bound():
    for a, p, sigma, bound in estimate_tail([1.0, 2.0, 3.0], 0.01, 10000, 11, workers=4):
        assert p <= bound + 3 * sigma


@pytest.mark.parametrize('seed', range(20))
def test_locality(seed):
    rng = np.random.default_rng(seed)
    region = Region(2, (20.0, 20.0), TORUS)
    centers = sample_poisson(region, float(rng.uniform(0.1, 2.0)), seed)
    i = tuple(int(x) for x in rng.integers(0, 20, size=2))
    a = float(rng.uniform(0.3, 1.5))

    assert verify_locality(i, a, centers)



@pytest.mark.slow
def test_locality_many_triples():
    rng = np.random.default_rng(1000)
    for k in range(1000):
        side = float(rng.integers(8, 25))
        region = Region(2, (side, side), (TORUS, BOX)[k % 2])
        centers = sample_poisson(region, float(rng.uniform(0.05, 3.0)), k)
        i = tuple(int(x) for x in rng.integers(0, CubeLattice(region).shape[0], size=2))
        a = float(rng.uniform(0.2, 3.0))

        assert verify_locality(i, a, centers)
