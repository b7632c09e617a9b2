import json

import numpy as np
import pandas as pd
import pytest

from StAlloc.pointprocess import Region, TORUS, BOX
from StAlloc.allocation import Grid
from StAlloc.percolation import *

from oracles import flood_fill


def test_union_find():
    uf = UnionFind(6)
    uf.union_pairs([4, 1], [5, 3])
    uf.union_pairs([5], [1])
    assert list(uf.find(np.arange(6))) == [0, 1, 2, 1, 1, 1]


@pytest.mark.parametrize('adjacency', ADJACENCIES)
@pytest.mark.parametrize('periodic', [False, True])
@pytest.mark.parametrize('density', [0.4, 0.6])
def test_labeling_matches_flood_fill(adjacency, periodic, density):
    mask = np.random.default_rng(7).uniform(size=(30, 41)) < density
    labeling = label_clusters(mask, adjacency, periodic)
    labels, count = flood_fill(mask, adjacency, periodic)

    assert labeling.count == count
    assert np.array_equal(labeling.labels, labels)
    assert np.array_equal(labeling.sizes, np.bincount(labels.ravel())[1:])


def test_labeling_3d_and_bounding_boxes():
    mask = np.zeros((4, 5, 6), dtype=bool)
    mask[1, 1:4, 2] = True
    mask[3, 0, 0] = True
    labeling = label_clusters(mask)

    assert labeling.count == 2
    assert labeling.labels[1, 1, 2] == 1
    assert labeling.labels[3, 0, 0] == 2
    assert labeling.bbox_min[0].tolist() == [1, 1, 2]
    assert labeling.bbox_max[0].tolist() == [1, 3, 2]


def test_empty_mask():
    labeling = label_clusters(np.zeros((3, 3), dtype=bool))
    assert labeling.count == 0
    assert not crossing(labeling).crossed
    assert vacant_crossing(np.zeros((3, 3), dtype=bool)).axes == (True, True)


def test_crossing_axes():
    mask = np.zeros((10, 8), dtype=bool)
    mask[:, 3] = True
    report = crossing(label_clusters(mask))

    assert report.crosses(0)
    assert not report.crosses(1)
    assert report.components[0] == 1
    assert crossing(label_clusters(mask), axis=1).components == {1: 0}


def test_diagonal_crossing_depends_on_adjacency():
    mask = np.eye(6, dtype=bool)
    assert not crossing(label_clusters(mask, FACE)).crossed
    assert crossing(label_clusters(mask, FACE_CORNER)).axes == (True, True)


def test_crossing_rejects_torus_labeling():
    with pytest.raises(ValueError):
        crossing(label_clusters(np.ones((4, 4), dtype=bool), periodic=True))


def test_crossing_monotone_under_inclusion():
    rng = np.random.default_rng(3)
    for _ in range(20):
        base = rng.uniform(size=(25, 25))
        small = base < 0.5
        large = base < 0.65
        for axis in (0, 1):
            if crossing(label_clusters(small), axis).crossed:
                assert crossing(label_clusters(large), axis).crossed


def _sweep(workers=1):
    grid = Grid(Region(2, (3.0, 3.0), BOX), 0.1)
    return sweep_alpha(1.0, grid, [0.3, 0.6, 0.9, 1.2], 6, 5, workers=workers)


def test_sweep_is_coupled_and_monotone():
    result = _sweep()

    assert np.all(np.diff(result.crossings) >= 0)
    assert np.all(np.diff(result.claimed_mean) >= -1e-12)
    assert np.all(np.diff(result.vacant_crossings) <= 0)

    frame = result.to_frame()
    assert list(frame.columns) == ['alpha', 'p_hat', 'ci_lo', 'ci_hi', 'replicas', 'crossings']
    assert np.all(frame['ci_lo'] <= frame['p_hat']) and np.all(frame['p_hat'] <= frame['ci_hi'])

    block = json.loads(result.threshold_block())
    assert block['rng'] == result.metadata['rng']
    assert block['fit_method'] in ('logistic', 'bisection')
    assert 'window' in block


def test_sweep_independent_of_workers():
    serial = _sweep(1)
    pooled = _sweep(2)

    assert np.array_equal(serial.crossings, pooled.crossings)
    assert np.array_equal(serial.claimed_mean, pooled.claimed_mean)
    assert serial.threshold_block() == pooled.threshold_block()


def test_sweep_rejects_bad_input():
    grid = Grid(Region(2, (3.0, 3.0), BOX), 0.1)
    with pytest.raises(ValueError):
        sweep_alpha(1.0, grid, [0.6, 0.5], 2, 1)
    with pytest.raises(ValueError):
        sweep_alpha(1.0, Grid(Region(2, (3.0, 3.0), TORUS), 0.1), [0.5, 0.6], 2, 1)


def test_write_sweep(tmp_path):
    result = _sweep()
    csv_path = str(tmp_path / 'sweep.csv')
    write_sweep(result, csv_path, str(tmp_path / 'threshold.txt'), str(tmp_path / 'phases.csv'))

    frame = pd.read_csv(csv_path)
    assert frame['crossings'].tolist() == result.crossings.tolist()
    assert pd.read_csv(str(tmp_path / 'phases.csv')).shape == (4, 3)
    with open(str(tmp_path / 'threshold.txt')) as fin:
        assert json.load(fin)['seed'] == 5


@pytest.mark.parametrize('seed', range(5))
def test_monotone_crossing_check(seed):
    grid = Grid(Region(2, (3.0, 3.0), BOX), 0.1)
    assert monotone_crossing_check(1.0, grid, 0.6, 0.8, seed)
    with pytest.raises(ValueError):
        monotone_crossing_check(1.0, grid, 0.8, 0.6, seed)


@pytest.mark.slow
def test_threshold_near_seven_tenths():
    grid = Grid(Region(2, (20.0, 20.0), BOX), 0.05)
    alphas = [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85]
    result = sweep_alpha(1.0, grid, alphas, 200, 1, workers=8)

    p = dict(zip(alphas, result.p_hat))
    assert p[0.6] < 0.35
    assert p[0.8] > 0.65
    assert 0.6 <= result.threshold.alpha_hat <= 0.8


@pytest.mark.slow
def test_monotone_crossing_many_coupled_pairs():
    rng = np.random.default_rng(21)
    grid = Grid(Region(2, (4.0, 4.0), BOX), 0.1)
    for seed in range(1000):
        alpha1, alpha2 = np.sort(rng.uniform(0.2, 1.4, size=2))
        assert monotone_crossing_check(1.0, grid, alpha1, alpha2, seed)


@pytest.mark.slow
def test_subcritical_claimed_set_leaves_vacant_crossing():
    grid = Grid(Region(2, (20.0, 20.0), BOX), 0.1)
    result = sweep_alpha(1.0, grid, [0.3, 0.8], 200, 3, workers=8)

    assert result.vacant_crossings[0] / result.replicas > 0.9
