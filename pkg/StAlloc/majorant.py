import sys
import numpy as np
from dataclasses import dataclass
from functools import partial
from scipy.special import gamma

from StAlloc.pointprocess import Region, BOX, sample_poisson
from StAlloc.allocation import UNCLAIMED
from StAlloc.percolation import FACE, label_clusters
from StAlloc.evaluation import wilson_interval, mc_sigma, mc_covariance
from StAlloc.sim_utils import replica_map


def pi_d(d):
    """Volume of the unit ball in R^d"""
    if d < 1:
        raise ValueError('dimension must be >= 1, got {}'.format(d))
    return float(np.pi**(d / 2.0) / gamma(d / 2.0 + 1.0))


def beta_d(d):
    """Dilation constant ceil(3 + 2 sqrt(d) pi_d^(1/d))"""
    if d < 2:
        raise ValueError('dimension must be >= 2, got {}'.format(d))
    return int(np.ceil(3.0 + 2.0 * np.sqrt(d) * pi_d(d)**(1.0 / d)))


class CubeLattice:
    """Level-1 cubes K_i = i + [-1/2, 1/2)^d meeting a region.

    On the torus the sides must be integers so the cubes tile the window and indices
    run over 0..L-1 with wraparound. In a box, indices run over 0..ceil(L+1/2)-1 and
    cube 0 straddles the lower face.
    """
    def __init__(self, region):
        shape = []
        for L in region.sides:
            if region.periodic:
                n = int(round(L))
                if abs(n - L) > 1e-9:
                    raise ValueError('level-1 cubes need integer torus sides, got {}'.format(L))
            else:
                n = int(np.ceil(L + 0.5))
            shape.append(n)

        self.region = region
        self.shape = tuple(shape)
        self.periodic = region.periodic
        self.d = region.d

    def __eq__(self, other):
        return isinstance(other, CubeLattice) and self.region == other.region

    @property
    def n_shape(self):
        return np.asarray(self.shape, dtype=np.int64)

    def index_of(self, points):
        """Lattice index (rows) of the half-open cube containing each point"""
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        idx = np.floor(points + 0.5).astype(np.int64)
        if self.periodic:
            return np.mod(idx, self.n_shape)
        return np.clip(idx, 0, self.n_shape - 1)

    def delta(self, i, j):
        """Index differences j - i, minimal image on the torus"""
        dlt = np.asarray(j, dtype=np.int64) - np.asarray(i, dtype=np.int64)
        if self.periodic:
            n = self.n_shape
            dlt = np.mod(dlt + n // 2, n) - n // 2
        return dlt

    def rho2(self, i, j):
        """Squared set distance between the closed cubes K_i and K_j (broadcasts over rows)"""
        gap = np.maximum(np.abs(self.delta(i, j)) - 1, 0)
        return np.sum(gap * gap, axis=-1)

    def all_indices(self):
        return np.stack(np.unravel_index(np.arange(int(np.prod(self.shape))), self.shape), axis=-1)


@dataclass(frozen=True, eq=False)
class ZetaField:
    """Center counts per level-1 cube, optionally restricted to a sub-box window"""
    lattice: CubeLattice
    counts: np.ndarray
    window: tuple = None

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class RField:
    lattice: CubeLattice
    values: np.ndarray
    zeta: ZetaField = None

    @property
    def max(self):
        return float(self.values.max()) if self.values.size else 0.0


@dataclass(frozen=True, eq=False)
class PaintedMask:
    lattice: CubeLattice
    mask: np.ndarray
    window: tuple = None


@dataclass(frozen=True)
class PassableVerdict:
    j: tuple
    m: float
    big_component: bool
    small_radii: bool

    @property
    def passable(self):
        return self.big_component and self.small_radii


def zeta_field(centers, lattice=None, window=None):
    """Counts of centers per level-1 cube; with window=(lower, upper) only centers in that closed box count"""
    if lattice is None:
        lattice = CubeLattice(centers.region)

    pts = centers.coords
    if window is not None:
        lower, upper = (np.asarray(w, dtype=float) for w in window)
        pts = pts[np.all((pts >= lower) & (pts <= upper), axis=1)]
        window = (tuple(lower), tuple(upper))

    counts = np.zeros(lattice.shape, dtype=np.int64)
    if len(pts) > 0:
        np.add.at(counts, tuple(lattice.index_of(pts).T), 1)

    return ZetaField(lattice, counts, window)


def discrete_ball(i, r, lattice):
    """Lattice indices j (rows) with rho(K_i, K_j) <= r; empty for r = 0"""
    d = lattice.d
    if r < 0:
        raise ValueError('radius must be >= 0, got {}'.format(r))
    if r == 0:
        return np.zeros((0, d), dtype=np.int64)

    reach = int(np.floor(r)) + 1
    axis = np.arange(-reach, reach + 1)
    offsets = np.stack([o.ravel() for o in np.meshgrid(*([axis] * d), indexing='ij')], axis=-1)
    gap = np.maximum(np.abs(offsets) - 1, 0)
    offsets = offsets[np.sum(gap * gap, axis=-1) <= r * r]

    idx = np.asarray(i, dtype=np.int64) + offsets
    if lattice.periodic:
        return np.unique(np.mod(idx, lattice.n_shape), axis=0)

    inside = np.all((idx >= 0) & (idx < lattice.n_shape), axis=1)
    return idx[inside]


def _smallest_radius(level_r2, cum, beta, d, pid):
    # On [sqrt(level_k)/beta, sqrt(level_{k+1})/beta) the count is cum[k]; the first
    # interval where pi_d r^d reaches it gives the infimum
    for k in range(len(level_r2)):
        lo = np.sqrt(level_r2[k]) / beta
        r = max(lo, (cum[k] / pid)**(1.0 / d))
        hi = np.sqrt(level_r2[k + 1]) / beta if k + 1 < len(level_r2) else np.inf
        if r < hi:
            return float(r)
    return np.inf


def _nonempty(zeta):
    nz = np.argwhere(zeta.counts > 0)
    return nz, zeta.counts[tuple(nz.T)]


def _radius(zeta, i, nz, weights, beta, pid):
    if zeta.counts[tuple(i)] == 0:
        return 0.0
    r2 = zeta.lattice.rho2(i, nz)
    levels, inverse = np.unique(r2, return_inverse=True)
    cum = np.cumsum(np.bincount(inverse, weights=weights))

    return _smallest_radius(levels, cum, beta, zeta.lattice.d, pid)


def compute_R(zeta, i):
    """R_i = inf{r > 0 : sum of zeta over B_i(beta_d r) <= pi_d r^d}, 0 if cube i is empty"""
    d = zeta.lattice.d
    nz, weights = _nonempty(zeta)

    return _radius(zeta, np.asarray(i, dtype=np.int64), nz, weights, beta_d(d), pi_d(d))


def compute_R_field(zeta, indices=None):
    """R for every lattice index (or only for the given index rows, others left at 0)"""
    d = zeta.lattice.d
    beta, pid = beta_d(d), pi_d(d)
    nz, weights = _nonempty(zeta)

    values = np.zeros(zeta.lattice.shape)
    rows = nz if indices is None else np.asarray(indices, dtype=np.int64).reshape(-1, d)
    for i in rows:
        values[tuple(i)] = _radius(zeta, i, nz, weights, beta, pid)

    return RField(zeta.lattice, values, zeta)


def painted_set(R, window=None):
    """Union of the discrete balls B_i(R_i)"""
    lattice = R.lattice
    if np.any(np.isinf(R.values)):
        raise ValueError('painted set needs finite R values; the window is too small')

    mask = np.zeros(lattice.shape, dtype=bool)
    for i in np.argwhere(R.values > 0):
        ball = discrete_ball(i, R.values[tuple(i)], lattice)
        mask[tuple(ball.T)] = True

    return PaintedMask(lattice, mask, window)


def painted_set_restricted(centers, window, lattice=None):
    """Painted set built from the centers inside the closed box window=(lower, upper) only"""
    zeta = zeta_field(centers, lattice, window)

    return painted_set(compute_R_field(zeta), zeta.window)


def coarsen_claimed(claimed, lattice=None):
    """Level-1 cubes containing at least one claimed cell"""
    grid = claimed.grid
    if lattice is None:
        lattice = CubeLattice(grid.region)

    coarse = np.zeros(lattice.shape, dtype=bool)
    cells = np.flatnonzero(claimed.mask.ravel())
    if len(cells) > 0:
        coarse[tuple(lattice.index_of(grid.cell_centers(cells)).T)] = True

    return coarse


def verify_containment(alloc, R):
    """(cell, center) pairs where a center in K_i owns a cell outside B_i(R_i)"""
    lattice = R.lattice
    if lattice.region != alloc.grid.region:
        raise ValueError('R field and allocation live on different regions')

    owner = alloc.owner.ravel()
    cells = np.flatnonzero(owner != UNCLAIMED)
    if len(cells) == 0:
        return []

    cell_cube = lattice.index_of(alloc.grid.cell_centers(cells))
    center_cube = lattice.index_of(alloc.centers.coords)
    home = center_cube[owner[cells]]
    r = R.values[tuple(home.T)]

    bad = (lattice.rho2(home, cell_cube) > r * r) | (r == 0)

    return [(int(cell), int(owner[cell])) for cell in cells[bad]]


def verify_separation(R):
    """Indices i with R_i > 0 where rho(B_i(R_i), complement of B_i(beta_d R_i)) <= R_i"""
    lattice = R.lattice
    beta = beta_d(lattice.d)
    everything = lattice.all_indices()

    violations = []
    for i in np.argwhere(R.values > 0):
        r = R.values[tuple(i)]
        inner = discrete_ball(i, r, lattice)

        # Complement cubes within reach of the inner ball; farther ones are farther from it
        r2 = lattice.rho2(i, everything)
        outer = everything[(r2 > (beta * r)**2) & (r2 <= (beta * r + r + np.sqrt(lattice.d) + 1)**2)]
        if len(outer) == 0:
            continue

        gap2 = lattice.rho2(inner[:, None, :], outer[None, :, :]).min()
        if not np.sqrt(gap2) > r:
            violations.append(tuple(int(x) for x in i))

    return violations


def neighbourhood_box(j, m):
    """Real bounds of K^m_j together with its 3^d - 1 neighbouring level-m cubes"""
    center = m * np.asarray(j, dtype=float)

    return center - 1.5 * m, center + 1.5 * m


def is_passable(j, m, centers, adjacency=FACE):
    """Passability of the level-m cube K^m_j for the configuration centers"""
    if not m > 0:
        raise ValueError('cube level must be > 0, got {}'.format(m))

    region = centers.region
    lattice = CubeLattice(region)
    j = tuple(int(x) for x in j)
    if len(j) != region.d:
        raise ValueError('cube index must have {} entries'.format(region.d))

    lower, upper = neighbourhood_box(j, m)
    if np.any(lower < -1e-9) or np.any(upper > region.side_array + 1e-9):
        raise ValueError('neighbourhood of cube {} at level {} exceeds the window'.format(j, m))
    beta = beta_d(region.d)

    # (ii) every R_i over the integer points of the neighbourhood is small
    lo = np.maximum(np.ceil(lower), 0).astype(np.int64)
    hi = np.minimum(np.floor(upper), lattice.n_shape - 1).astype(np.int64)
    block = np.stack([g.ravel() for g in np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing='ij')], axis=-1)

    zeta = zeta_field(centers, lattice)
    occupied = block[zeta.counts[tuple(block.T)] > 0]
    R = compute_R_field(zeta, occupied)
    small_radii = bool(np.all(R.values[tuple(block.T)] < m / (6.0 * (beta + 1))))

    # (i) a painted component of the restricted set with diameter >= m/2 meets K^m_j
    painted = painted_set_restricted(centers, (lower, upper), lattice)
    labeling = label_clusters(painted.mask, adjacency, periodic=lattice.periodic)

    big_component = False
    if labeling.count > 0:
        extent = (labeling.bbox_max - labeling.bbox_min + 1).max(axis=1)
        big = np.flatnonzero(extent >= m / 2.0) + 1

        c = m * np.asarray(j, dtype=float)
        lo = np.maximum(np.ceil(c - m / 2.0 - 0.5), 0).astype(np.int64)
        hi = np.minimum(np.floor(c + m / 2.0 + 0.5), lattice.n_shape - 1).astype(np.int64)
        window = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        touching = np.unique(labeling.labels[window])
        big_component = bool(np.isin(big, touching).any())

    return PassableVerdict(j, float(m), big_component, small_radii)


def _passable_replica(m, lam, sides, cubes, adjacency, replica, seed):
    region = Region(len(sides), sides, BOX)
    centers = sample_poisson(region, lam, seed)

    return [is_passable(j, m, centers, adjacency).passable for j in cubes]


def estimate_p_m(m, lam, replicas, seed, d=2, adjacency=FACE, workers=1):
    """Monte Carlo estimate of the probability that a level-m cube is passable.

    The cube sits in the middle of a box of side 4m, which holds its neighbourhood with
    a margin of m/2 on every face.

    Returns:
      (estimate, (ci_lo, ci_hi)) with a 95% Wilson interval
    """
    if replicas < 1:
        raise ValueError('replicas must be >= 1, got {}'.format(replicas))

    sides = (4.0 * m,) * d
    cube = (2,) * d
    func = partial(_passable_replica, m, lam, sides, [cube], adjacency)
    hits = sum(r[0] for r in replica_map(func, replicas, seed, workers))

    return hits / replicas, wilson_interval(hits, replicas)


@dataclass(frozen=True)
class PassabilityCorrelation:
    replicas: int
    p_first: float
    p_second: float
    p_joint: float
    covariance: float
    sigma: float
    correlation: float

    @property
    def within_3_sigma(self):
        return abs(self.covariance) <= 3.0 * self.sigma + 1e-15


def estimate_passability_correlation(m, lam, replicas, seed, separation=5, d=2, adjacency=FACE, workers=1):
    """Joint passability of two level-m cubes whose indices differ by separation along axis 0"""
    if m <= 6 or separation < 5:
        print('Warning: passability events are only independent for m > 6 and separation >= 5', file=sys.stderr)

    sides = (m * (4.0 + separation),) + (4.0 * m,) * (d - 1)
    first = (2,) * d
    second = (2 + separation,) + (2,) * (d - 1)
    func = partial(_passable_replica, m, lam, sides, [first, second], adjacency)
    outcomes = np.array(replica_map(func, replicas, seed, workers), dtype=float).reshape(-1, 2)

    x, y = outcomes[:, 0], outcomes[:, 1]
    cov, sigma = mc_covariance(x, y)
    sx, sy = x.std(), y.std()
    corr = cov / (sx * sy) if sx > 0 and sy > 0 else 0.0

    return PassabilityCorrelation(replicas, x.mean(), y.mean(), (x * y).mean(), cov, sigma, corr)


def chernoff_g(x):
    return (x - 1.0 - np.log(x)) / x


def chernoff_tail_bound(a, lam, d):
    """Poisson Chernoff bound on P[R_0 > a], clamped to 1 where it does not apply"""
    if not a > 0 or not lam > 0:
        raise ValueError('need a > 0 and lam > 0, got a={}, lam={}'.format(a, lam))

    volume = (2.0 * beta_d(d) * a + 3.0)**d
    ratio = lam * volume / (pi_d(d) * a**d)
    if not 0 < ratio < 1:
        return 1.0

    return float(np.exp(-lam * volume * chernoff_g(ratio)))


def _origin_radius_replica(lam, side, d, replica, seed):
    centers = sample_poisson(Region(d, (side,) * d), lam, seed)
    zeta = zeta_field(centers)

    return compute_R(zeta, (0,) * d)


def estimate_tail(a_values, lam, replicas, seed, d=2, workers=1):
    """Empirical P[R_0 > a] on a torus large enough to hold B_0(beta_d a)

    Returns:
      list of (a, p_hat, mc_sigma, bound) rows
    """
    side = float(2 * int(np.ceil(beta_d(d) * max(a_values))) + 6)
    func = partial(_origin_radius_replica, lam, side, d)
    radii = np.array(replica_map(func, replicas, seed, workers))

    rows = []
    for a in a_values:
        hits = int(np.count_nonzero(radii > a))
        p = hits / replicas
        rows.append((a, p, mc_sigma(p, replicas), chernoff_tail_bound(a, lam, d)))

    return rows


def verify_locality(i, a, centers):
    """Whether {R_i <= a} is unchanged after deleting the centers outside B_i(beta_d a)"""
    lattice = CubeLattice(centers.region)
    i = np.asarray(i, dtype=np.int64)

    before = compute_R(zeta_field(centers, lattice), i) <= a
    if len(centers) == 0:
        return True

    r2 = lattice.rho2(i, lattice.index_of(centers.coords))
    local = centers.subset(r2 <= (beta_d(lattice.d) * a)**2)
    after = compute_R(zeta_field(local, lattice), i) <= a

    return bool(before == after)
