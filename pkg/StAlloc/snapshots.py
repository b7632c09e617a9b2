import os
import sys
import numpy as np
import h5py

from StAlloc.pointprocess import Region, CenterSet
from StAlloc.allocation import Grid, make_allocation
from StAlloc.majorant import CubeLattice, RField, PaintedMask
from StAlloc._version import __version__

# Datasets every allocation snapshot must carry
REQUIRED = ('owner', 'disputed_bits', 'centers', 'claimed_counts', 'sated')


def _dataset(hf, name, data, compress=True):
    # No timestamps, so identical inputs give identical files
    if compress and data.size > 0:
        return hf.create_dataset(name, data=data, compression='gzip', compression_opts=4, track_times=False)
    return hf.create_dataset(name, data=data, track_times=False)


def write_snapshot(h5f_path, alloc, R=None, painted=None):
    """Write an allocation (and optionally an R field and a painted mask) to an HDF5 container"""
    grid = alloc.grid
    region = grid.region
    centers = alloc.centers

    print('Writing HDF5 snapshot:', h5f_path)
    sys.stdout.flush()

    with h5py.File(h5f_path, 'w') as hf:
        hf.attrs['d'] = region.d
        hf.attrs['sides'] = np.asarray(region.sides)
        hf.attrs['topology'] = region.topology
        hf.attrs['h'] = grid.h
        hf.attrs['shape'] = np.asarray(grid.shape)
        hf.attrs['alpha'] = alloc.alpha
        hf.attrs['quota'] = alloc.quota
        hf.attrs['realized_alpha'] = alloc.realized_alpha
        hf.attrs['intensity'] = centers.intensity
        hf.attrs['seed'] = -1 if centers.seed is None else int(centers.seed)
        hf.attrs['rng'] = centers.rng_id
        hf.attrs['engine_version'] = __version__

        _dataset(hf, 'owner', np.asarray(alloc.owner, dtype=np.int32))
        _dataset(hf, 'disputed_bits', np.packbits(alloc.disputed.ravel()))
        _dataset(hf, 'centers', np.asarray(centers.coords, dtype=float).reshape(-1, region.d), compress=False)
        _dataset(hf, 'claimed_counts', np.asarray(alloc.counts, dtype=np.int64), compress=False)
        _dataset(hf, 'sated', np.asarray(alloc.sated, dtype=np.uint8), compress=False)

        if R is not None:
            _dataset(hf, 'R', np.asarray(R.values, dtype=float))
            if R.zeta is not None:
                _dataset(hf, 'zeta', np.asarray(R.zeta.counts, dtype=np.int64))
        if painted is not None:
            _dataset(hf, 'painted', np.asarray(painted.mask, dtype=np.uint8))


def read_snapshot(h5f_path):
    """Read a snapshot back.

    Returns:
      (allocation, R field or None, painted mask or None)
    """
    if not os.path.exists(h5f_path):
        raise ValueError('snapshot not found: {}'.format(h5f_path))

    try:
        with h5py.File(h5f_path, 'r') as hf:
            missing = [name for name in REQUIRED if name not in hf]
            if missing:
                raise ValueError('incomplete snapshot {}, missing {}'.format(h5f_path, ', '.join(missing)))

            attrs = dict(hf.attrs)
            owner = hf['owner'][()]
            bits = hf['disputed_bits'][()]
            coords = hf['centers'][()]
            R_values = hf['R'][()] if 'R' in hf else None
            painted = hf['painted'][()].astype(bool) if 'painted' in hf else None
    except OSError:
        raise ValueError('snapshot is empty or incomplete: {}'.format(h5f_path))

    topology = attrs['topology']
    if isinstance(topology, bytes):
        topology = topology.decode()
    region = Region(int(attrs['d']), tuple(attrs['sides']), topology)
    grid = Grid(region, float(attrs['h']))
    if tuple(owner.shape) != grid.shape:
        raise ValueError('owner map shape {} does not match the grid {}'.format(owner.shape, grid.shape))

    seed = int(attrs['seed'])
    centers = CenterSet(region, coords, float(attrs['intensity']), None if seed < 0 else seed)
    disputed = np.unpackbits(bits)[:grid.n_cells].astype(bool)
    alloc = make_allocation(centers, grid, float(attrs['alpha']), owner, disputed)

    lattice = None
    R = None
    mask = None
    if R_values is not None or painted is not None:
        lattice = CubeLattice(region)
    if R_values is not None:
        R = RField(lattice, R_values)
    if painted is not None:
        mask = PaintedMask(lattice, painted)

    return alloc, R, mask
