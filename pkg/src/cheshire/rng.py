"""Reproducible random streams.

Every run draws from generators built on ``numpy.random.SeedSequence`` keyed by
``(master_seed, *keys)``; the key tuple plays the role of a hash of the master
seed and the run coordinates, so ensembles do not depend on execution order.
"""

import numpy as np

ORGANIC_STREAM = 0
CONTROL_STREAM = 1


def seed_sequence(seed, *keys):
    if isinstance(seed, np.random.SeedSequence):
        if keys:
            return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
        return seed
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def derive_seed(master_seed, *keys):
    """Deterministic 63-bit integer seed for the run identified by ``keys``."""
    state = seed_sequence(master_seed, *keys).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def make_rng(seed, *keys):
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def run_streams(seed):
    """Organic and control generators for one simulation run.

    The organic stream depends only on ``seed`` so controlled and uncontrolled
    runs sharing a seed consume identical organic randomness.
    """
    return make_rng(seed, ORGANIC_STREAM), make_rng(seed, CONTROL_STREAM)
