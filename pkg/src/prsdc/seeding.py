"""Deterministic seed derivation.

Every random stream is keyed by (master_seed, tag, index...) through numpy's
SeedSequence, so results never depend on execution order or worker count.
"""

import numpy as np

# stable integer tags for the different stream families
SPLIT = 1
REPLICATE = 2
GENOTYPE = 3
SIGNAL = 4
PHENOTYPE = 5
SNR = 6
STABILITY = 7


def _sequence(master_seed, keys):
    return np.random.SeedSequence(int(master_seed) % 2 ** 128,
                                  spawn_key=tuple(int(k) for k in keys))


def derive_seed(master_seed, *keys) -> int:
    """A 63-bit integer seed for the stream identified by ``keys``."""
    a, b = _sequence(master_seed, keys).generate_state(2, np.uint32)
    return int((int(a) << 31) ^ int(b)) & (2 ** 63 - 1)


def make_rng(master_seed, *keys) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream identified by ``keys``."""
    return np.random.Generator(np.random.Philox(_sequence(master_seed, keys)))
