import heapq
import numpy as np
from dataclasses import dataclass

from StAlloc._version import __version__

# Owner value of cells no center has claimed
UNCLAIMED = -1

SUBCRITICAL = 'subcritical'
CRITICAL = 'critical'
SUPERCRITICAL = 'supercritical'


class Grid:
    """Discretization of a region into cubic cells of side h.

    Args:
      region: the Region to discretize
      h: cell side, must divide every side length of the region
    """
    def __init__(self, region, h):
        if not h > 0:
            raise ValueError('cell size must be > 0, got {}'.format(h))

        shape = []
        for L in region.sides:
            n = int(round(L / h))
            if n < 1 or abs(n * h - L) > 1e-9 * max(L, 1.0):
                raise ValueError('cell size {} does not divide side length {}'.format(h, L))
            shape.append(n)

        self.region = region
        self.h = float(h)
        self.shape = tuple(shape)
        self.n_cells = int(np.prod(shape))

    def __eq__(self, other):
        return isinstance(other, Grid) and self.region == other.region and self.shape == other.shape

    def __repr__(self):
        return 'Grid(sides={}, topology={}, h={}, shape={})'.format(self.region.sides, self.region.topology, self.h, self.shape)

    @property
    def d(self):
        return self.region.d

    @property
    def cell_volume(self):
        return self.h**self.d

    def axis_centers(self, k):
        return (np.arange(self.shape[k]) + 0.5) * self.h

    def cell_centers(self, cells=None):
        """Center coordinates of flat cell indices (all cells by default)"""
        if cells is None:
            cells = np.arange(self.n_cells)
        idx = np.unravel_index(np.asarray(cells), self.shape)

        return np.stack([(i + 0.5) * self.h for i in idx], axis=-1)

    def cell_of(self, x):
        """Index tuple of the cell containing point x"""
        idx = np.floor(np.asarray(x, dtype=float) / self.h).astype(int)

        return tuple(int(min(max(i, 0), n - 1)) for i, n in zip(idx, self.shape))

    def axis_sq_dist(self, k, idx, x):
        """Squared axis-k displacement between cell centers idx and coordinate x"""
        diff = (np.asarray(idx) + 0.5) * self.h - x
        if self.region.periodic:
            L = self.region.sides[k]
            diff = diff - L * np.floor(diff / L + 0.5)

        return diff * diff

    def distances(self, x, cells):
        """Distances from point x to the centers of flat cell indices"""
        idx = np.unravel_index(np.asarray(cells), self.shape)
        acc = self.axis_sq_dist(0, idx[0], x[0])
        for k in range(1, self.d):
            acc = acc + self.axis_sq_dist(k, idx[k], x[k])

        return np.sqrt(acc)

    def all_distances(self, x):
        """Distances from point x to every cell center, flattened in cell index order"""
        acc = None
        for k in range(self.d):
            shape = [1] * self.d
            shape[k] = self.shape[k]
            sq = self.axis_sq_dist(k, np.arange(self.shape[k]), x[k]).reshape(shape)
            acc = sq if acc is None else acc + sq

        return np.sqrt(acc).ravel()


class _CandidateRing:
    """Cells around one center in increasing (distance, cell index) order.

    Cells are generated lazily in square shells of growing Chebyshev radius (in cells).
    Only candidates strictly closer than (radius + 1/2)*h are released, since every
    cell outside the generated square is at least that far from the center.
    """
    def __init__(self, grid, x, radius, step):
        self.grid = grid
        self.x = x
        self.home = grid.cell_of(x)
        self.step = step
        self.radius = -1
        self.dist = []
        self.cells = []
        self.pos = 0
        self.release = 0
        self.complete = False
        self._expand(radius)

    def _axis_offsets(self, k, radius):
        n = self.grid.shape[k]
        if self.grid.region.periodic:
            lo, hi = -(n // 2), n - 1 - n // 2
        else:
            lo, hi = -self.home[k], n - 1 - self.home[k]

        return np.arange(max(lo, -radius), min(hi, radius) + 1)

    def _covers_grid(self, radius):
        for k, n in enumerate(self.grid.shape):
            if self.grid.region.periodic:
                reach = n // 2
            else:
                reach = max(self.home[k], n - 1 - self.home[k])
            if radius < reach:
                return False
        return True

    def _expand(self, radius):
        grid = self.grid
        offsets = np.meshgrid(*[self._axis_offsets(k, radius) for k in range(grid.d)], indexing='ij')

        cheb = np.abs(offsets[0])
        for o in offsets[1:]:
            cheb = np.maximum(cheb, np.abs(o))
        shell = cheb > self.radius

        idx = []
        for k, o in enumerate(offsets):
            i = self.home[k] + o[shell]
            if grid.region.periodic:
                i = np.mod(i, grid.shape[k])
            idx.append(i)
        cells = np.ravel_multi_index(idx, grid.shape)
        dist = grid.distances(self.x, cells)

        # Merge with what has been generated but not released yet
        dist = np.concatenate([np.asarray(self.dist[self.pos:], dtype=float), dist])
        cells = np.concatenate([np.asarray(self.cells[self.pos:], dtype=np.int64), cells])
        order = np.lexsort((cells, dist))
        dist = dist[order]

        self.radius = radius
        self.complete = self._covers_grid(radius)
        if self.complete:
            self.release = len(dist)
        else:
            self.release = int(np.searchsorted(dist, (radius + 0.5) * grid.h, side='left'))

        self.dist = dist.tolist()
        self.cells = cells[order].tolist()
        self.pos = 0

    def pop_free(self, owner, capture, disputed, center, limit=np.inf):
        """Next candidate cell that is still unclaimed, or None.

        Claimed cells met on the way are skipped; a skipped cell whose capture distance
        equals the distance to this (unsated) center is flagged as disputed.
        """
        while True:
            while self.pos < self.release:
                d = self.dist[self.pos]
                if d > limit:
                    return None
                cell = self.cells[self.pos]
                self.pos += 1
                if owner[cell] < 0:
                    return d, cell
                if capture[cell] == d and owner[cell] != center:
                    disputed.add(cell)

            if self.complete:
                return None
            self._expand(max(self.radius + self.step, 2 * self.radius))


@dataclass(frozen=True, eq=False)
class Allocation:
    """Discretized stable allocation.

    owner holds a center index or UNCLAIMED per cell (grid-shaped int32); disputed
    flags cells where two or more unsated centers were exactly equidistant at capture.
    """
    grid: Grid
    centers: object
    alpha: float
    quota: int
    owner: np.ndarray
    disputed: np.ndarray
    counts: np.ndarray
    sated: np.ndarray

    @property
    def n_centers(self):
        return len(self.counts)

    @property
    def realized_alpha(self):
        return self.quota * self.grid.cell_volume

    @property
    def claimed_fraction(self):
        return float(np.count_nonzero(self.owner != UNCLAIMED)) / self.grid.n_cells

    def territory(self, k):
        """Flat indices of the cells owned by center k"""
        return np.flatnonzero(self.owner.ravel() == k)

    def metadata(self):
        return {
            'alpha': self.alpha,
            'quota': self.quota,
            'realized_alpha': self.realized_alpha,
            'h': self.grid.h,
            'sides': self.grid.region.sides,
            'topology': self.grid.region.topology,
            'seed': self.centers.seed,
            'rng': self.centers.rng_id,
            'engine_version': __version__,
        }


@dataclass(frozen=True, eq=False)
class ClaimedMask:
    grid: Grid
    mask: np.ndarray

    @property
    def fraction(self):
        return float(np.count_nonzero(self.mask)) / self.mask.size


def quota_for(alpha, grid):
    """Cells per center for appetite alpha, rounded half up"""
    return int(np.floor(alpha / grid.cell_volume + 0.5))


def compute_allocation(centers, grid, alpha):
    """Stable allocation of grid cells to centers with appetite alpha.

    (cell, center) pairs are processed in increasing (distance, center index, cell index)
    order; a cell goes to the first still unsated center that reaches it and each center
    stops after quota cells.
    """
    if alpha < 0:
        raise ValueError('appetite must be >= 0, got {}'.format(alpha))
    if centers.region != grid.region:
        raise ValueError('centers and grid must share a region')

    quota = quota_for(alpha, grid)
    n = len(centers)
    n_cells = grid.n_cells

    owner = [UNCLAIMED] * n_cells
    capture = [np.inf] * n_cells
    disputed = set()
    counts = [0] * n

    if quota > 0 and n > 0:
        start = int(np.ceil(quota**(1.0 / grid.d)))
        step = max(1, int(np.ceil(1.0 / grid.h)))

        rings = [_CandidateRing(grid, centers.coords[c], start, step) for c in range(n)]
        heap = []
        for c in range(n):
            item = rings[c].pop_free(owner, capture, disputed, c)
            if item is not None:
                heap.append((item[0], c, item[1]))
        heapq.heapify(heap)

        claimed = 0
        last = None
        while heap:
            d, c, cell = heapq.heappop(heap)
            if last is not None and d > last:
                break

            if owner[cell] >= 0:
                if capture[cell] == d and owner[cell] != c:
                    disputed.add(cell)
            else:
                owner[cell] = c
                capture[cell] = d
                counts[c] += 1
                claimed += 1
                if claimed == n_cells:
                    last = d
                if counts[c] == quota:
                    # c was unsated for every capture so far; flag its remaining ties at d
                    while rings[c].pop_free(owner, capture, disputed, c, limit=d) is not None:
                        pass
                    rings[c] = None
                    continue

            if last is None:
                item = rings[c].pop_free(owner, capture, disputed, c)
            else:
                # Grid is full: only ties at the final capture distance remain
                item = rings[c].pop_free(owner, capture, disputed, c, limit=last)
            if item is not None:
                heapq.heappush(heap, (item[0], c, item[1]))

    owner = np.array(owner, dtype=np.int32).reshape(grid.shape)
    flags = np.zeros(n_cells, dtype=bool)
    if disputed:
        flags[np.fromiter(disputed, dtype=np.int64)] = True
    counts = np.array(counts, dtype=np.int64)

    for arr in (owner, flags, counts):
        arr.setflags(write=False)

    return Allocation(grid, centers, float(alpha), quota, owner, flags.reshape(grid.shape), counts, counts >= quota)


def make_allocation(centers, grid, alpha, owner, disputed=None):
    """Build an Allocation from an explicit owner map (snapshots and hand-made instances)"""
    quota = quota_for(alpha, grid)
    owner = np.asarray(owner, dtype=np.int32).reshape(grid.shape)
    if disputed is None:
        disputed = np.zeros(grid.shape, dtype=bool)
    disputed = np.asarray(disputed, dtype=bool).reshape(grid.shape)
    counts = np.bincount(owner[owner >= 0].ravel(), minlength=len(centers)).astype(np.int64)
    if len(counts) > len(centers):
        raise ValueError('owner map refers to {} centers, only {} given'.format(len(counts), len(centers)))
    if np.any(counts > quota):
        raise ValueError('owner map exceeds the quota of {} cells'.format(quota))

    return Allocation(grid, centers, float(alpha), quota, owner, disputed, counts, counts >= quota)


def claimed_set(alloc):
    """Cells owned by some center (disputed cells count as claimed)"""
    return ClaimedMask(alloc.grid, alloc.owner != UNCLAIMED)


def sated_fraction(alloc):
    if alloc.n_centers == 0:
        return 1.0
    return float(np.count_nonzero(alloc.sated)) / alloc.n_centers


def regime(lam, alpha):
    """Phase of the model from the product lam*alpha"""
    x = lam * alpha
    if np.isclose(x, 1.0, rtol=1e-12, atol=0.0):
        return CRITICAL
    return SUBCRITICAL if x < 1 else SUPERCRITICAL


def capture_radius(alloc, k):
    """Largest distance from center k to a cell of its territory (0 if it has none)"""
    cells = alloc.territory(k)
    if len(cells) == 0:
        return 0.0
    return float(alloc.grid.distances(alloc.centers.coords[k], cells).max())


def _check_same_centers(alloc, centers):
    if centers is alloc.centers:
        return
    if len(centers) != alloc.n_centers or centers.region != alloc.grid.region:
        raise ValueError('allocation was not computed on these centers')
    if not np.array_equal(centers.coords, alloc.centers.coords):
        raise ValueError('allocation was not computed on these centers')


def verify_stability(alloc, centers):
    """All (cell, center) pairs where the cell desires the center and the center covets the cell.

    Exhaustive O(cells x centers) check; disputed cells are exempt.
    """
    _check_same_centers(alloc, centers)

    grid = alloc.grid
    owner = alloc.owner.ravel()
    disputed = alloc.disputed.ravel()

    owner_dist = np.full(grid.n_cells, np.inf)
    for c in range(alloc.n_centers):
        terr = owner == c
        if terr.any():
            owner_dist[terr] = grid.all_distances(centers.coords[c])[terr]

    unstable = []
    for c in range(alloc.n_centers):
        dist = grid.all_distances(centers.coords[c])
        terr = owner == c

        if alloc.sated[c]:
            far = dist[terr].max() if terr.any() else -np.inf
            covets = dist < far
        else:
            covets = np.ones(grid.n_cells, dtype=bool)
        desires = (owner == UNCLAIMED) | (dist < owner_dist)

        bad = desires & covets & ~terr & ~disputed
        unstable.extend((int(cell), c) for cell in np.flatnonzero(bad))

    return unstable
