"""Counter-based random streams.

Every random vector in the package is drawn from a Philox generator whose
key is the master seed and whose counter encodes (stream, cycle, member).
Draws are therefore independent of evaluation order, thread schedule and of
which other vectors were drawn before.
"""

import numpy as np

TRUTH_INIT = 1
OBSERVATION_NOISE = 2
ENSEMBLE_INIT = 3
ADDITIVE_INFLATION = 4
NETWORK_INIT = 5

_MASK64 = (1 << 64) - 1


def keyed_generator(seed, stream, cycle=0, member=0):
    """Return a fresh ``np.random.Generator`` for one (seed, stream, cycle, member) key."""
    if seed < 0 or cycle < 0 or member < 0:
        raise ValueError("seed, cycle and member must be non-negative")
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    # low words advance while drawing; the high words isolate the streams
    counter = np.array([0, 0, cycle & _MASK64, member & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def keyed_normal(seed, stream, cycle, member, size):
    """Standard-normal vector for one key; element ``i`` belongs to grid index ``i``."""
    return keyed_generator(seed, stream, cycle, member).standard_normal(size)
