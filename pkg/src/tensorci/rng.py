"""Deterministic random streams.

Every source of randomness in the package is a Philox (counter-based)
generator keyed by a root seed plus an integer path, so replications and
sub-streams are independent and reproducible regardless of execution order
or worker count.
"""

import numpy as np

# Fixed stream ids appended to (seed, ...) paths.
STREAM_SIGNAL = 0
STREAM_LOADING = 1
STREAM_REP = 2


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator keyed by (seed, *path). Same arguments, same stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
