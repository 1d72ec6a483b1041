"""Counter-based uniform streams.

Every draw is a pure function of ``(seed, replication, coordinate, step)``, so a
replication produces the same numbers no matter how replications are batched or
which worker runs them. The mixer is the SplitMix64 finalizer applied once per
key component.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# coordinate ids used by the coupling engine
COORD_X = 0
COORD_Y = 1
COORD_JOINT = 2


def _mix(z):
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    return z ^ (z >> _S31)


def stream_keys(seed, reps, coord):
    """Per-replication keys for one coordinate; ``reps`` is an int array."""
    with np.errstate(over="ignore"):
        k = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        r = np.asarray(reps, dtype=np.uint64)
        k = _mix(k + (r + np.uint64(1)) * _GOLDEN)
        return _mix(k + np.uint64(coord + 1) * _GOLDEN)


def uniforms(keys, step):
    """One uniform in the open interval (0, 1) per key, for time index ``step``."""
    with np.errstate(over="ignore"):
        z = _mix(keys + np.uint64(step + 1) * _GOLDEN)
    return ((z >> _S11).astype(np.float64) + 0.5) * _INV53


def uniform(seed, rep, coord, step):
    """Scalar convenience wrapper around :func:`uniforms`."""
    keys = stream_keys(seed, np.array([rep]), coord)
    return float(uniforms(keys, step)[0])
