import numpy as np
from dataclasses import dataclass

from StAlloc.sim_utils import RNG_ID, make_rng

TORUS = 'torus'
BOX = 'box'
TOPOLOGIES = (TORUS, BOX)


@dataclass(frozen=True)
class Region:
    """Finite simulation window, a box or a flat torus.

    Args:
      d: dimension (>= 2)
      sides: side length per axis, the window is [0, sides[k]) on axis k
      topology: TORUS (minimal-image metric) or BOX (plain Euclidean)
    """
    d: int
    sides: tuple
    topology: str = TORUS

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError('dimension must be an integer >= 2, got {}'.format(self.d))
        sides = tuple(float(s) for s in self.sides)
        if len(sides) != self.d:
            raise ValueError('expected {} side lengths, got {}'.format(self.d, len(sides)))
        if min(sides) <= 0:
            raise ValueError('side lengths must be positive, got {}'.format(sides))
        if self.topology not in TOPOLOGIES:
            raise ValueError('unknown topology: {}'.format(self.topology))
        object.__setattr__(self, 'd', int(self.d))
        object.__setattr__(self, 'sides', sides)

    @property
    def periodic(self):
        return self.topology == TORUS

    @property
    def volume(self):
        return float(np.prod(self.sides))

    @property
    def side_array(self):
        return np.asarray(self.sides, dtype=float)

    def wrap(self, diff):
        """Map coordinate differences to the minimal image (no-op in a box)"""
        diff = np.asarray(diff, dtype=float)
        if not self.periodic:
            return diff
        L = self.side_array
        return diff - L * np.floor(diff / L + 0.5)

    def distance(self, x, y):
        """Window metric between points (broadcasts over leading axes)"""
        dx = self.wrap(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        acc = dx[..., 0] * dx[..., 0]
        for k in range(1, self.d):
            acc = acc + dx[..., k] * dx[..., k]
        return np.sqrt(acc)

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((points >= 0) & (points < self.side_array), axis=1)

    def scaled(self, b):
        return Region(self.d, tuple(s * b for s in self.sides), self.topology)


@dataclass(frozen=True, eq=False)
class CenterSet:
    """Poisson configuration of centers on a region.

    The coordinate array is read-only, so a CenterSet can be shared by replicas.
    """
    region: Region
    coords: np.ndarray
    intensity: float
    seed: int = None
    rng_id: str = RNG_ID

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1, self.region.d)
        if len(coords) > 0 and not np.all(self.region.contains(coords)):
            raise ValueError('all centers must lie inside the region')
        if self.intensity < 0:
            raise ValueError('intensity must be >= 0, got {}'.format(self.intensity))
        coords.setflags(write=False)
        object.__setattr__(self, 'coords', coords)
        object.__setattr__(self, 'intensity', float(self.intensity))

    def __len__(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.region.d

    def subset(self, keep):
        """CenterSet of the selected centers (boolean mask or index list), order preserved"""
        return CenterSet(self.region, self.coords[keep], self.intensity, self.seed, self.rng_id)

    def with_coords(self, coords):
        return CenterSet(self.region, coords, self.intensity, self.seed, self.rng_id)


def sample_poisson(region, lam, seed):
    """Sample a homogeneous Poisson configuration with intensity lam on region"""
    if lam < 0:
        raise ValueError('intensity must be >= 0, got {}'.format(lam))

    rng = make_rng(seed)
    n = rng.poisson(lam * region.volume) if lam > 0 else 0
    L = region.side_array
    coords = rng.uniform(0.0, 1.0, size=(n, region.d)) * L

    # u < 1 can still round up to L after scaling
    coords = np.minimum(coords, np.nextafter(L, 0))

    return CenterSet(region, coords, lam, seed)


def rescale(centers, b):
    """Apply the homothety x -> b*x to centers and region; intensity becomes lam/b^d"""
    if not b > 0:
        raise ValueError('scale factor must be > 0, got {}'.format(b))
    if b == 1:
        return centers

    region = centers.region.scaled(b)
    coords = centers.coords * b
    coords = np.minimum(coords, np.nextafter(region.side_array, 0))

    return CenterSet(region, coords, centers.intensity / b**centers.d, centers.seed, centers.rng_id)


def translate(centers, shift):
    """Translate all centers by shift, wrapping on the torus"""
    region = centers.region
    if not region.periodic:
        raise ValueError('translation is only defined on the torus')
    coords = np.mod(centers.coords + np.asarray(shift, dtype=float), region.side_array)
    coords = np.minimum(coords, np.nextafter(region.side_array, 0))

    return centers.with_coords(coords)


def cube_membership(points, i, m, region):
    """Boolean mask of points inside the half-open level-m cube m*i + [-m/2, m/2)^d"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    anchor = m * np.asarray(i, dtype=float)
    diff = region.wrap(points - anchor)

    return np.all((diff >= -m / 2.0) & (diff < m / 2.0), axis=1)


def count_in_cube(centers, i, m):
    """Number of centers in the level-m cube with index i"""
    if len(centers) == 0:
        return 0
    if len(i) != centers.d:
        raise ValueError('cube index must have {} entries'.format(centers.d))

    return int(np.count_nonzero(cube_membership(centers.coords, i, m, centers.region)))


def write_centers(centers, path):
    """Write centers as text: a header 'd lam seed topology sides...' then one center per line"""
    region = centers.region
    seed = -1 if centers.seed is None else centers.seed
    header = [str(region.d), repr(centers.intensity), str(seed), region.topology] + ['%.17g' % s for s in region.sides]

    with open(path, 'w') as fout:
        fout.write(' '.join(header) + '\n')
        for row in centers.coords:
            fout.write(' '.join('%.17g' % x for x in row) + '\n')


def read_centers(path):
    """Read a CenterSet written by write_centers"""
    with open(path) as fin:
        header = fin.readline().split()
        if len(header) < 4:
            raise ValueError('malformed center file header in {}'.format(path))

        d = int(header[0])
        lam = float(header[1])
        seed = int(header[2])
        topology = header[3]
        sides = tuple(float(s) for s in header[4:])
        region = Region(d, sides, topology)

        rows = [line.split() for line in fin if line.strip()]

    coords = np.array(rows, dtype=float).reshape(-1, d)

    return CenterSet(region, coords, lam, None if seed < 0 else seed)
