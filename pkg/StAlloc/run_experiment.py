import warnings
warnings.filterwarnings('ignore', category=FutureWarning)

import sys
import os
import argparse
import textwrap
import time
import datetime
from functools import partial

import numpy as np
import pandas as pd

from StAlloc.pointprocess import Region, BOX, sample_poisson, write_centers
from StAlloc.allocation import *
from StAlloc.majorant import *
from StAlloc.percolation import *
from StAlloc.boolean_model import domination_check
from StAlloc.evaluation import print_table, mc_sigma
from StAlloc.rendering import render, panel, allocation_image, mask_image, write_ppm
from StAlloc.snapshots import write_snapshot, read_snapshot
from StAlloc.config import *
from StAlloc.sim_utils import replica_map
from StAlloc._version import __version__

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

FLOAT_FORMAT = '%.10g'


def add_config_arguments(parser):
    """Flags mirroring the ExperimentConfig keys; values are validated by the config layer"""
    setup = parser.add_argument_group('Model arguments')
    runs = parser.add_argument_group('Run arguments')

    parser.add_argument('--config', type=str, metavar='FILE', default=None,
                        help=textwrap.dedent("""
                        Key=value config file; flags given on the command line
                        override its values. A manifest.txt from an earlier run
                        can be used here. Default: None.""").strip())

    setup.add_argument('--dimension', type=str, metavar='INT', default=None,
                       help=textwrap.dedent("""
                       Dimension of the window. Default: 2.""").strip())

    setup.add_argument('--sides', type=str, metavar='FLOATS', default=None,
                       help=textwrap.dedent("""
                       Comma-separated side lengths of the window in model units.
                       Default: 20,20.""").strip())

    setup.add_argument('--topology', type=str, metavar='STR', default=None,
                       help=textwrap.dedent("""
                       'torus' or 'box'. Default: 'box' for sweep, 'torus' otherwise.""").strip())

    setup.add_argument('--h', type=str, metavar='FLOAT', default=None,
                       help=textwrap.dedent("""
                       Cell size of the grid; must divide every side length.
                       Default: 0.05.""").strip())

    setup.add_argument('--intensity', type=str, metavar='FLOAT', default=None,
                       help=textwrap.dedent("""
                       Intensity of the Poisson centers. Default: 1.""").strip())

    setup.add_argument('--alpha', type=str, metavar='FLOATS', default=None,
                       help=textwrap.dedent("""
                       Comma-separated appetites. For allocate several values give
                       a multi-panel picture; for sweep the values must increase.
                       Default: 0.6 (allocate), 0.55,...,0.85 (sweep),
                       0.5,0.8,1 (diagnostics).""").strip())

    setup.add_argument('--adjacency', type=str, metavar='STR', default=None,
                       help=textwrap.dedent("""
                       Cluster adjacency, 'face' or 'face_corner'. Default: 'face'.""").strip())

    setup.add_argument('--m_values', type=str, metavar='FLOATS', default=None,
                       help=textwrap.dedent("""
                       Cube levels m for the pm experiment. Default: 10,20,40.""").strip())

    setup.add_argument('--a_values', type=str, metavar='FLOATS', default=None,
                       help=textwrap.dedent("""
                       Radii a for the tailbound experiment. Default: 1,2,3.""").strip())

    runs.add_argument('--replicas', type=str, metavar='INT', default=None,
                      help=textwrap.dedent("""
                      Number of independent replicas. Default: 1 (allocate),
                      200 (sweep), 1000 (pm), 10000 (tailbound), 100 (diagnostics).""").strip())

    runs.add_argument('--seed', type=str, metavar='INT', default=None,
                      help=textwrap.dedent("""
                      Master seed; replica streams are derived from it. Default: 1.""").strip())

    runs.add_argument('--workers', type=str, metavar='INT', default=None,
                      help=textwrap.dedent("""
                      Number of worker processes for replicas; outputs do not
                      depend on it. Default: 1.""").strip())

    runs.add_argument('--outdir', type=str, metavar='DIR', default=None,
                      help=textwrap.dedent("""
                      Output directory. Default: ${} or '{}'.""".format(ENV_OUTDIR, DEFAULT_OUTDIR)).strip())

    runs.add_argument('--render', type=str, metavar='BOOL', default=None,
                      help=textwrap.dedent("""
                      Write PPM images (2D only). Default: true.""").strip())

    runs.add_argument('--render_scale', type=str, metavar='INT', default=None,
                      help=textwrap.dedent("""
                      Pixels per grid cell in images. Default: 2.""").strip())

    runs.add_argument('--snapshot', type=str, metavar='BOOL', default=None,
                      help=textwrap.dedent("""
                      Write HDF5 snapshots of allocations. Default: false.""").strip())


def parse_arguments(parser, argv=None):
    """
    Parse parameters from the command line
    """
    parser.add_argument('-v', '--version', action='version',
                        version='%(prog)s {}'.format(__version__))

    subparsers = parser.add_subparsers(dest='verb', metavar='VERB')

    helps = {
        ALLOCATE: 'Allocate one or more configurations and render them.',
        SWEEP: 'Crossing probability of the claimed set versus appetite.',
        PM_ESTIMATE: 'Monte Carlo estimate of the passability probability p_m.',
        TAIL_BOUND: 'Empirical tail of R_0 against the Chernoff bound.',
        DIAGNOSTICS: 'Stability, containment and domination checks over replicas.',
    }
    for kind in KINDS:
        sub = subparsers.add_parser(kind, help=helps[kind], formatter_class=argparse.RawTextHelpFormatter)
        add_config_arguments(sub)

    sub = subparsers.add_parser('render', help='Render a stored HDF5 snapshot to PPM.',
                                formatter_class=argparse.RawTextHelpFormatter)
    required = sub.add_argument_group('Required arguments')
    required.add_argument('--input', type=str, metavar='FILE', required=True,
                          help=textwrap.dedent("""
                          HDF5 snapshot written by 'allocate --snapshot true'.""").strip())
    required.add_argument('--output', type=str, metavar='FILE', required=True,
                          help=textwrap.dedent("""
                          Output PPM file.""").strip())
    sub.add_argument('--render_scale', type=int, metavar='INT', default=2,
                     help=textwrap.dedent("""
                     Pixels per grid cell. Default: 2.""").strip())
    sub.add_argument('--mask', default=False, action='store_true',
                     help=textwrap.dedent("""
                     Render the claimed mask instead of the territories.
                     Default: False.""").strip())

    argv = sys.argv[1:] if argv is None else argv
    if len(argv) == 0:
        parser.parse_args(['--help'])

    return parser.parse_args(argv)


def config_from_args(args):
    overrides = {'kind': args.verb}
    for key in PARSERS:
        value = getattr(args, key, None)
        if key != 'kind' and value is not None:
            overrides[key] = value

    return load_config(args.config, overrides)


def _region(config):
    return Region(config.dimension, tuple(config.sides), config.topology)


def _crossing_flags(mask, config):
    if config.topology != BOX:
        return [None] * config.dimension
    report = crossing(label_clusters(mask, config.adjacency))

    return list(report.axes)


def _allocate_replica(config, outdir, replica, seed):
    print('Allocating replica {} (seed {})'.format(replica, seed))
    sys.stdout.flush()

    region = _region(config)
    grid = Grid(region, config.h)
    centers = sample_poisson(region, config.intensity, seed)
    suffix = '_r{}'.format(replica)
    write_centers(centers, os.path.join(outdir, 'centers' + suffix + '.txt'))

    rows = []
    allocs = []
    for k, alpha in enumerate(config.alpha):
        alloc = compute_allocation(centers, grid, alpha)
        allocs.append(alloc)
        mask = claimed_set(alloc)

        row = [replica, seed, alpha, alloc.quota, alloc.realized_alpha, len(centers),
               mask.fraction, sated_fraction(alloc), regime(config.intensity, alpha)]
        rows.append(row + _crossing_flags(mask, config))

        if config.snapshot:
            R, painted = None, None
            if alpha <= 1:
                try:
                    R = compute_R_field(zeta_field(centers))
                    painted = painted_set(R)
                except ValueError as e:
                    print('Warning: no majorant fields in the snapshot:', e)
            write_snapshot(os.path.join(outdir, 'snapshot{}_a{}.h5'.format(suffix, k)), alloc, R, painted)

    if config.render and config.dimension == 2:
        scale = config.render_scale
        write_ppm(panel([allocation_image(a, scale) for a in allocs]), os.path.join(outdir, 'allocation' + suffix + '.ppm'))

        mask = claimed_set(allocs[-1])
        highlight = None
        if config.topology == BOX:
            labeling = label_clusters(mask, config.adjacency)
            ids = [c for c in crossing(labeling).components.values() if c > 0]
            if ids:
                highlight = np.isin(labeling.labels, ids)
        write_ppm(mask_image(mask, scale, highlight, centers, grid), os.path.join(outdir, 'claimed' + suffix + '.ppm'))

    return rows


def run_allocate(config, outdir):
    func = partial(_allocate_replica, config, outdir)
    results = replica_map(func, config.replicas, config.seed, config.workers)

    columns = ['replica', 'seed', 'alpha', 'quota', 'realized_alpha', 'n_centers', 'claimed_fraction',
               'sated_fraction', 'regime'] + ['crossing_axis{}'.format(k) for k in range(config.dimension)]
    stats = pd.DataFrame([row for rows in results for row in rows], columns=columns)
    stats.to_csv(os.path.join(outdir, 'allocate.csv'), index=False, float_format=FLOAT_FORMAT)

    print_table(['alpha', 'claimed fraction', 'sated fraction'],
                stats.groupby('alpha')[['claimed_fraction', 'sated_fraction']].mean().reset_index().values)


def run_sweep(config, outdir):
    grid = Grid(_region(config), config.h)
    result = sweep_alpha(config.intensity, grid, config.alpha, config.replicas, config.seed,
                         config.adjacency, workers=config.workers)
    write_sweep(result, os.path.join(outdir, 'sweep.csv'), os.path.join(outdir, 'threshold.txt'),
                os.path.join(outdir, 'sweep_phases.csv'))

    frame = result.to_frame()
    print_table(list(frame.columns), frame.values)
    print('Threshold estimate ({}): {:.4f} [{:.4f}, {:.4f}]'.format(result.threshold.method, result.threshold.alpha_hat,
                                                                     result.threshold.ci_lo, result.threshold.ci_hi))
    print('NOTE:', result.metadata['window'])


def run_pm(config, outdir):
    rows = []
    for m in config.m_values:
        print('Estimating p_m for m =', m)
        sys.stdout.flush()
        p, (lo, hi) = estimate_p_m(m, config.intensity, config.replicas, config.seed, config.dimension,
                                   config.adjacency, config.workers)
        rows.append([m, p, lo, hi, config.replicas])

    frame = pd.DataFrame(rows, columns=['m', 'p_hat', 'ci_lo', 'ci_hi', 'replicas']).sort_values('m')

    # Trend in m is reported, not enforced: a rise beyond 3 combined sigma is flagged
    sigma = np.array([mc_sigma(p, n) for p, n in zip(frame['p_hat'], frame['replicas'])])
    rise = np.diff(frame['p_hat'].values) - 3.0 * np.sqrt(sigma[1:]**2 + sigma[:-1]**2)
    frame['nonincreasing'] = np.concatenate([[True], rise <= 0])
    if not frame['nonincreasing'].all():
        print('NOTE: p_m rises with m beyond Monte Carlo error; finite-size effects dominate')
    frame.to_csv(os.path.join(outdir, 'pm.csv'), index=False, float_format=FLOAT_FORMAT)
    print_table(list(frame.columns), frame.values)


def run_tailbound(config, outdir):
    rows = estimate_tail(config.a_values, config.intensity, config.replicas, config.seed,
                         config.dimension, config.workers)
    frame = pd.DataFrame(rows, columns=['a', 'p_hat', 'mc_sigma', 'bound'])
    frame['within_bound'] = frame['p_hat'] <= frame['bound'] + 3 * frame['mc_sigma']
    frame.to_csv(os.path.join(outdir, 'tail.csv'), index=False, float_format=FLOAT_FORMAT)
    print_table(list(frame.columns), frame.values)


def _diagnostics_replica(config, replica, seed):
    region = _region(config)
    grid = Grid(region, config.h)
    centers = sample_poisson(region, config.intensity, seed)

    lattice = None
    try:
        lattice = CubeLattice(region)
    except ValueError:
        pass

    R = None
    separation = None
    restricted_excess = None
    if lattice is not None:
        R = compute_R_field(zeta_field(centers, lattice))
        full = painted_set(R).mask
        separation = len(verify_separation(R))
        lower = np.zeros(region.d)
        upper = region.side_array / 2.0
        restricted = painted_set_restricted(centers, (lower, upper), lattice).mask
        restricted_excess = int(np.count_nonzero(restricted & ~full))

    rows = []
    for alpha in config.alpha:
        alloc = compute_allocation(centers, grid, alpha)
        containment, uncovered = None, None
        if lattice is not None and alpha <= 1:
            containment = len(verify_containment(alloc, R))
            uncovered = int(np.count_nonzero(coarsen_claimed(claimed_set(alloc), lattice) & ~full))
        rows.append([replica, seed, alpha, len(centers), len(verify_stability(alloc, centers)), containment,
                     len(domination_check(alloc, centers)), uncovered, separation, restricted_excess,
                     sated_fraction(alloc), _max_capture_radius(alloc)])

    return rows


def _max_capture_radius(alloc):
    return max([capture_radius(alloc, k) for k in range(alloc.n_centers)], default=0.0)


def run_diagnostics(config, outdir):
    func = partial(_diagnostics_replica, config)
    results = replica_map(func, config.replicas, config.seed, config.workers)

    columns = ['replica', 'seed', 'alpha', 'n_centers', 'unstable_pairs', 'containment_violations',
               'domination_violations', 'claimed_not_painted', 'separation_violations',
               'restricted_not_painted', 'sated_fraction', 'max_capture_radius']
    frame = pd.DataFrame([row for rows in results for row in rows], columns=columns)
    frame.to_csv(os.path.join(outdir, 'diagnostics.csv'), index=False, float_format=FLOAT_FORMAT)

    checks = columns[4:10]
    summary = []
    for alpha, group in frame.groupby('alpha'):
        summary.append([alpha, len(group)] + [_total(group[c]) for c in checks])
    print_table(['alpha', 'replicas'] + checks, summary)

    return frame


def _total(column):
    values = column.dropna()
    return 'n/a' if len(values) == 0 else int(values.sum())


RUNNERS = {
    ALLOCATE: run_allocate,
    SWEEP: run_sweep,
    PM_ESTIMATE: run_pm,
    TAIL_BOUND: run_tailbound,
    DIAGNOSTICS: run_diagnostics,
}


def run(config):
    """Run one experiment; returns the exit status"""
    outdir = config.outdir
    try:
        os.makedirs(outdir, exist_ok=True)
        if not os.access(outdir, os.W_OK):
            raise OSError('output directory is not writable: {}'.format(outdir))
        write_manifest(config, os.path.join(outdir, 'manifest.txt'))
        RUNNERS[config.kind](config, outdir)
    except (ValueError, OSError) as e:
        print('Error:', e, file=sys.stderr)
        return EXIT_RUNTIME

    return EXIT_OK


def render_snapshot(args):
    alloc, R, painted = read_snapshot(args.input)
    if args.mask:
        render(claimed_set(alloc), args.output, args.render_scale)
    else:
        render(alloc, args.output, args.render_scale)


def main(argv=None):
    parser = argparse.ArgumentParser(prog='stalloc', formatter_class=argparse.RawTextHelpFormatter,
                                     description="""
    Overview
    --------
    This tool simulates stable allocations of a grid-discretized window to Poisson
    centers with appetite alpha, and runs the percolation and majorant experiments
    built on them.

    * Input data
    Parameters come from command-line flags and/or a key=value config file given
    with '--config'. Lengths are in model units, not cells.

    * Output data
    Every run writes 'manifest.txt' (all resolved parameters, engine version and
    RNG identifier) to the output directory, plus CSV tables:
    allocate -> allocate.csv, centers_r*.txt, allocation_r*.ppm, claimed_r*.ppm
    sweep -> sweep.csv, sweep_phases.csv, threshold.txt
    pm -> pm.csv; tailbound -> tail.csv; diagnostics -> diagnostics.csv

    Command line examples
    ---------------------
    1. Side-by-side allocations of one configuration at four appetites:

        stalloc allocate --sides 20,20 --topology box --alpha 0.25,0.45,0.6,0.8 \\
        --seed 7 --outdir fig1

    2. Threshold sweep on a 20x20 box with 8 worker processes:

        stalloc sweep --replicas 200 --workers 8 --outdir sweep20

    3. Re-run an experiment from its manifest:

        stalloc sweep --config sweep20/manifest.txt

    Notes
    -----
    Exit codes: 0 ok, 2 configuration error, 3 runtime error.
    """)

    argv = sys.argv[1:] if argv is None else list(argv)
    args = parse_arguments(parser, argv)

    # Print command line
    print(' '.join([parser.prog] + argv))
    for k, v in vars(args).items():
        print("{0}: {1}".format(k, v))

    start_time = time.time()
    print('Start time:', datetime.datetime.now())
    sys.stdout.flush()

    if args.verb is None:
        parser.print_help()
        return EXIT_CONFIG

    if args.verb == 'render':
        try:
            render_snapshot(args)
        except (ValueError, OSError) as e:
            print('Error:', e, file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        config = config_from_args(args)
    except ConfigError as e:
        print('Error:', e, file=sys.stderr)
        return EXIT_CONFIG

    status = run(config)
    print('Total time used: %s seconds' % (time.time() - start_time))

    return status


if __name__ == "__main__":
    sys.exit(main())
