import numpy as np
from dataclasses import dataclass
from scipy.spatial import cKDTree

from StAlloc.allocation import UNCLAIMED
from StAlloc.majorant import pi_d


@dataclass(frozen=True)
class BooleanParams:
    """Poisson Boolean model: balls of a fixed radius around Poisson points"""
    intensity: float
    radius: float
    d: int = 2

    def __post_init__(self):
        if not self.intensity > 0 or not self.radius > 0:
            raise ValueError('Boolean model needs positive intensity and radius, got {}, {}'.format(self.intensity, self.radius))


def boolean_radius(alpha, d):
    """Radius of the ball of volume alpha"""
    return (alpha / pi_d(d))**(1.0 / d)


def boolean_mask(centers, radius, grid):
    """Cells whose center point lies within radius of some center"""
    if not radius > 0:
        raise ValueError('radius must be > 0, got {}'.format(radius))
    region = grid.region
    if centers.region != region:
        raise ValueError('centers and grid must share a region')

    mask = np.zeros(grid.n_cells, dtype=bool)
    if len(centers) > 0:
        if region.periodic:
            tree = cKDTree(centers.coords, boxsize=region.sides)
        else:
            tree = cKDTree(centers.coords)
        dist, _ = tree.query(grid.cell_centers(), k=1, distance_upper_bound=radius * (1 + 1e-9))
        mask = dist <= radius

    return mask.reshape(grid.shape)


def domination_check(alloc, centers):
    """Cells within (alpha/pi_d)^(1/d) - h*sqrt(d) of a center that are not claimed"""
    grid = alloc.grid
    radius = boolean_radius(alloc.alpha, grid.d) - grid.h * np.sqrt(grid.d)
    if radius <= 0 or len(centers) == 0:
        return []

    covered = boolean_mask(centers, radius, grid)
    missing = covered & (alloc.owner == UNCLAIMED)

    return [int(c) for c in np.flatnonzero(missing.ravel())]


def equivalent_boolean_params(alpha, d):
    """Boolean model with radius 1/2 whose coverage matches rate 1 and radius (alpha/pi_d)^(1/d)"""
    if not alpha > 0:
        raise ValueError('appetite must be > 0, got {}'.format(alpha))

    return BooleanParams(alpha * 2**d / pi_d(d), 0.5, d)
