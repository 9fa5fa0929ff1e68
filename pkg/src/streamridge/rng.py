"""Counter-based deterministic random numbers.

The generator is SplitMix64 used in counter mode: output i of stream t under
seed s is ``mix64(s + (t << 56) + i + 1)`` where ``mix64`` is the standard
SplitMix64 finalizer (Steele, Lea & Flood).  Every draw is a pure function of
(seed, stream, counter), so any slice of any stream can be regenerated
independently, in any order, on any platform, bit for bit.

Normal variates use the inverse-CDF method with Wichura's AS241 (PPND16),
exposed by SciPy as ``ndtri``.  Uniform inputs are mapped to the open
interval (0, 1) as ``((x >> 11) + 0.5) * 2**-53`` so the CDF inverse never
sees 0 or 1.
"""

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Stream tags: distinct high-byte offsets keep counter spaces disjoint.
STREAM_COLUMNS = 1
STREAM_WEIGHTS = 2
STREAM_SPLIT = 3
STREAM_SYNTH_DIRS = 4
STREAM_SYNTH_NOISE = 5
STREAM_SHUFFLE = 6


def _mix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x * _GOLDEN
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def raw64(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """uint64 outputs [start, start+count) of the given stream."""
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        base = base + (np.uint64(stream) << np.uint64(56))
        ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        return _mix64(base + ctr)


def uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Doubles in the open interval (0, 1)."""
    bits = raw64(seed, stream, start, count)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Standard normal draws via the AS241 inverse CDF."""
    return ndtri(uniforms(seed, stream, start, count))


def permutation(seed: int, stream: int, n: int, tag: int = 0) -> np.ndarray:
    """Deterministic permutation of range(n) via random-key argsort.

    ``tag`` selects a sub-stream so independent permutations can share one
    (seed, stream) pair.
    """
    keys = raw64(seed, stream, tag * n, n)
    return np.argsort(keys, kind="stable")
