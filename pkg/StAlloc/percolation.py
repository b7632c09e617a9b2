import json
import itertools
import numpy as np
import pandas as pd
from dataclasses import dataclass, field
from functools import partial

from StAlloc.pointprocess import sample_poisson
from StAlloc.allocation import compute_allocation, claimed_set
from StAlloc.evaluation import wilson_interval, fit_threshold
from StAlloc.sim_utils import RNG_ID, replica_map
from StAlloc._version import __version__

FACE = 'face'
FACE_CORNER = 'face_corner'
ADJACENCIES = (FACE, FACE_CORNER)


class UnionFind:
    """Disjoint sets over 0..n-1 with array-wide hooking and pointer jumping.

    Hooking always points the larger root at the smaller one, so after compression
    every element points at the smallest member of its set.
    """
    def __init__(self, n):
        self.parent = np.arange(n, dtype=np.int64)

    def compress(self):
        p = self.parent
        while True:
            pp = p[p]
            if np.array_equal(pp, p):
                break
            p = pp
        self.parent = p

    def union_pairs(self, u, v):
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        while True:
            self.compress()
            pu, pv = self.parent[u], self.parent[v]
            diff = pu != pv
            if not diff.any():
                break
            np.minimum.at(self.parent, np.maximum(pu[diff], pv[diff]), np.minimum(pu[diff], pv[diff]))

    def find(self, x):
        self.compress()
        return self.parent[x]


def _half_neighbourhood(d, adjacency):
    # One offset per neighbour pair: the first nonzero entry is positive
    if adjacency == FACE:
        return [tuple(int(k == a) for k in range(d)) for a in range(d)]
    if adjacency == FACE_CORNER:
        offs = []
        for o in itertools.product((-1, 0, 1), repeat=d):
            nz = [x for x in o if x != 0]
            if nz and nz[0] > 0:
                offs.append(o)
        return offs
    raise ValueError('unknown adjacency: {}'.format(adjacency))


def _neighbour_pairs(mask, adjacency, periodic):
    shape = mask.shape
    idx = np.arange(mask.size, dtype=np.int64).reshape(shape)
    us, vs = [], []

    for off in _half_neighbourhood(mask.ndim, adjacency):
        if periodic:
            nb = np.roll(idx, tuple(-o for o in off), axis=tuple(range(mask.ndim)))
            both = mask & mask.ravel()[nb]
            us.append(idx[both])
            vs.append(nb[both])
        else:
            src, dst = [], []
            for o, n in zip(off, shape):
                src.append(slice(0, n - o) if o >= 0 else slice(-o, n))
                dst.append(slice(o, n) if o >= 0 else slice(0, n + o))
            src, dst = tuple(src), tuple(dst)
            both = mask[src] & mask[dst]
            us.append(idx[src][both])
            vs.append(idx[dst][both])

    if not us:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(us), np.concatenate(vs)


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Connected components of a mask; label 0 is background, label k >= 1 is the
    component whose smallest cell index ranks k-th."""
    labels: np.ndarray
    count: int
    sizes: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    adjacency: str = FACE
    periodic: bool = False


@dataclass(frozen=True)
class CrossingReport:
    # axis -> label of a crossing component, 0 when the axis is not crossed
    components: dict = field(default_factory=dict)

    def crosses(self, axis):
        return self.components[axis] > 0

    @property
    def axes(self):
        return tuple(self.components[a] > 0 for a in sorted(self.components))

    @property
    def crossed(self):
        return any(self.axes)


def _as_array(mask):
    return np.asarray(getattr(mask, 'mask', mask), dtype=bool)


def label_clusters(mask, adjacency=FACE, periodic=False):
    """Exact connected-component labeling of a boolean mask"""
    mask = _as_array(mask)
    d = mask.ndim

    uf = UnionFind(mask.size)
    u, v = _neighbour_pairs(mask, adjacency, periodic)
    if len(u) > 0:
        uf.union_pairs(u, v)
    uf.compress()

    fg = np.flatnonzero(mask.ravel())
    flat = np.zeros(mask.size, dtype=np.int64)
    if len(fg) == 0:
        empty = np.zeros((0, d), dtype=np.int64)
        return ClusterLabeling(flat.reshape(mask.shape), 0, np.zeros(0, dtype=np.int64), empty, empty, adjacency, periodic)

    roots, inverse = np.unique(uf.parent[fg], return_inverse=True)
    flat[fg] = inverse + 1
    count = len(roots)

    coords = np.unravel_index(fg, mask.shape)
    bbox_min = np.zeros((count, d), dtype=np.int64)
    bbox_max = np.zeros((count, d), dtype=np.int64)
    for k in range(d):
        lo = np.full(count, mask.shape[k], dtype=np.int64)
        hi = np.full(count, -1, dtype=np.int64)
        np.minimum.at(lo, inverse, coords[k])
        np.maximum.at(hi, inverse, coords[k])
        bbox_min[:, k] = lo
        bbox_max[:, k] = hi

    return ClusterLabeling(flat.reshape(mask.shape), count, np.bincount(inverse, minlength=count),
                           bbox_min, bbox_max, adjacency, periodic)


def crossing(labeling, axis=None):
    """Components touching both extreme layers along axis (every axis when axis is None)"""
    if labeling.periodic:
        raise ValueError('crossings are not defined on a torus labeling')

    labels = labeling.labels
    axes = range(labels.ndim) if axis is None else [axis]

    components = {}
    for a in axes:
        first = labels.take(0, axis=a)
        last = labels.take(labels.shape[a] - 1, axis=a)
        common = np.intersect1d(first[first > 0], last[last > 0])
        components[a] = int(common[0]) if len(common) > 0 else 0

    return CrossingReport(components)


def vacant_crossing(mask, axis=None, adjacency=FACE):
    """Crossing of the unclaimed (complement) set"""
    return crossing(label_clusters(~_as_array(mask), adjacency), axis)


def _claimed_crossing(centers, grid, alpha, adjacency, axis):
    mask = claimed_set(compute_allocation(centers, grid, alpha))
    crossed = crossing(label_clusters(mask, adjacency), axis).crossed
    vacant = vacant_crossing(mask, axis, adjacency).crossed

    return crossed, vacant, mask.fraction


def _sweep_replica(lam, grid, alphas, adjacency, axis, replica, seed):
    centers = sample_poisson(grid.region, lam, seed)

    return [_claimed_crossing(centers, grid, alpha, adjacency, axis) for alpha in alphas]


@dataclass(frozen=True, eq=False)
class SweepResult:
    alphas: np.ndarray
    replicas: int
    crossings: np.ndarray
    vacant_crossings: np.ndarray
    claimed_mean: np.ndarray
    threshold: object
    metadata: dict

    @property
    def p_hat(self):
        return self.crossings / self.replicas

    def to_frame(self):
        ci = np.array([wilson_interval(k, self.replicas) for k in self.crossings]).reshape(-1, 2)

        return pd.DataFrame({
            'alpha': self.alphas,
            'p_hat': self.p_hat,
            'ci_lo': ci[:, 0],
            'ci_hi': ci[:, 1],
            'replicas': self.replicas,
            'crossings': self.crossings,
        })

    def phase_frame(self):
        return pd.DataFrame({
            'alpha': self.alphas,
            'vacant_p_hat': self.vacant_crossings / self.replicas,
            'claimed_mean': self.claimed_mean,
        })

    def threshold_block(self):
        block = {
            'alpha_hat': self.threshold.alpha_hat,
            'ci_lo': self.threshold.ci_lo,
            'ci_hi': self.threshold.ci_hi,
            'fit_method': self.threshold.method,
            'bootstrap': self.threshold.n_boot,
        }
        block.update(self.metadata)

        return json.dumps(block, indent=2, sort_keys=True)


def sweep_alpha(lam, grid, alphas, replicas, seed, adjacency=FACE, axis=0, workers=1):
    """Claimed-set crossing probability along axis for each alpha, with a threshold fit.

    The same centers are used for every alpha within a replica, so the estimates are
    coupled and nondecreasing in alpha replica by replica.
    """
    alphas = np.asarray(alphas, dtype=float)
    if len(alphas) == 0 or np.any(np.diff(alphas) <= 0):
        raise ValueError('alpha values must be strictly increasing')
    if grid.region.periodic:
        raise ValueError('crossing sweeps need a box region')
    if replicas < 1:
        raise ValueError('replicas must be >= 1, got {}'.format(replicas))

    func = partial(_sweep_replica, lam, grid, list(alphas), adjacency, axis)
    rows = replica_map(func, replicas, seed, workers)

    outcome = np.array([[r[0] for r in row] for row in rows], dtype=bool)
    vacant = np.array([[r[1] for r in row] for row in rows], dtype=bool)
    fraction = np.array([[r[2] for r in row] for row in rows], dtype=float)

    metadata = {
        'intensity': lam,
        'sides': list(grid.region.sides),
        'topology': grid.region.topology,
        'h': grid.h,
        'axis': axis,
        'adjacency': adjacency,
        'seed': seed,
        'rng': RNG_ID,
        'engine_version': __version__,
        'window': 'finite-size estimate on a {} box; the infinite-volume threshold may differ'.format(
            'x'.join('%g' % s for s in grid.region.sides)),
    }

    return SweepResult(alphas, replicas, outcome.sum(axis=0), vacant.sum(axis=0), fraction.mean(axis=0),
                       fit_threshold(alphas, outcome, seed=seed), metadata)


def write_sweep(result, csv_path, threshold_path, phase_path=None):
    result.to_frame().to_csv(csv_path, index=False, float_format='%.10g')
    if phase_path is not None:
        result.phase_frame().to_csv(phase_path, index=False, float_format='%.10g')
    with open(threshold_path, 'w') as fout:
        fout.write(result.threshold_block() + '\n')


def monotone_crossing_check(lam, grid, alpha1, alpha2, seed, adjacency=FACE, axis=0):
    """Whether a claimed crossing at alpha1 implies one at alpha2 on the same centers"""
    if alpha1 > alpha2:
        raise ValueError('need alpha1 <= alpha2, got {} > {}'.format(alpha1, alpha2))

    centers = sample_poisson(grid.region, lam, seed)
    first = claimed_set(compute_allocation(centers, grid, alpha1))
    second = claimed_set(compute_allocation(centers, grid, alpha2))

    crossed1 = crossing(label_clusters(first, adjacency), axis).crossed
    crossed2 = crossing(label_clusters(second, adjacency), axis).crossed

    return (not crossed1) or crossed2
