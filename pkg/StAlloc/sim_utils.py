import sys
import numpy as np

from functools import partial
from multiprocessing import Pool

# Identifier written into every output that depends on random numbers
RNG_ID = 'numpy.Philox4x64-10+SeedSequence'


def make_rng(seed):
    """Counter-based generator for a 64-bit seed"""
    if seed is None or int(seed) != seed or seed < 0 or seed >= 2**64:
        raise ValueError('seed must be an integer in [0, 2^64), got {}'.format(seed))

    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def replica_seed(master_seed, replica):
    """Seed of one replica stream, a hash of (master seed, replica index)"""
    ss = np.random.SeedSequence([int(master_seed), int(replica)])

    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _call_replica(func, master_seed, replica):
    return func(replica, replica_seed(master_seed, replica))


def replica_map(func, n_replicas, master_seed, workers=1):
    """Run func(replica, seed) for every replica; results come back in replica order

    Args:
      func: picklable top-level callable (or functools.partial of one)
      n_replicas: number of replicas
      master_seed: master seed the replica streams derive from
      workers: number of worker processes, 1 runs in this process
    """
    task = partial(_call_replica, func, master_seed)

    if workers is None or workers <= 1 or n_replicas <= 1:
        return [task(r) for r in range(n_replicas)]

    with Pool(processes=min(workers, n_replicas)) as pool:
        results = pool.map(task, range(n_replicas))
    sys.stdout.flush()

    return results
