"""Counter-based random streams for the compiled kernels.

Every (seed, pixel, sample) triple hashes to its own splitmix64 stream, so
results never depend on how work is split across threads.
"""

import numpy as np
from ._jit import jit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@jit
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@jit
def stream_seed(seed, a, b):
    """Hash a global seed and two counters into a stream state."""
    h = mix64(np.uint64(seed) + _GOLDEN)
    h = mix64(h ^ (np.uint64(a) * _M1 + _GOLDEN))
    h = mix64(h ^ (np.uint64(b) * _M2 + _GOLDEN))
    return h


@jit
def new_state(seed, a, b):
    st = np.empty(1, dtype=np.uint64)
    st[0] = stream_seed(seed, a, b)
    return st


@jit
def next_u64(st):
    st[0] += _GOLDEN
    return mix64(st[0])


@jit
def next_float(st):
    """Uniform double in [0, 1)."""
    return float(next_u64(st) >> _S11) * _INV53
