"""Counter-based random streams.

Every variate is a pure function of ``(key, counter)``: the key identifies a
stream (derived from the run seed and a path such as the replicate index) and
the counter identifies the draw inside it.  Nothing is stateful, so a batch of
replicates can be advanced in lock-step with numpy while producing exactly the
values each replicate would see when simulated alone, in any order and on any
number of workers.

The mixing function is the SplitMix64 finaliser.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MASK64 = (1 << 64) - 1

# Counter layout: event index in the high bits, slot in the low byte.
SLOT_BITS = 8
SLOT_INTERARRIVAL = 0
SLOT_NORMAL = 1  # slots 1..d hold the d proposal normals of one event
SLOT_TERMINAL = 128  # slots 128..128+d-1: terminal draw from the output proposal
SLOT_AUX = 200  # miscellaneous per-event uniforms (absorption, component choice)


def mix64(x):
    """SplitMix64 finaliser, elementwise on a uint64 array."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _M1
        x = (x ^ (x >> _S27)) * _M2
        return x ^ (x >> _S31)


def _as_u64(value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype.kind == "u":
        return arr.astype(np.uint64)
    if arr.dtype.kind == "i":
        return arr.astype(np.int64).view(np.uint64)
    return np.asarray([int(v) & _MASK64 for v in np.ravel(arr)], dtype=np.uint64).reshape(arr.shape)


def derive_key(seed: int, *path) -> np.ndarray:
    """Hash a seed and a path of integers (scalars or arrays) into stream keys.

    Array components broadcast, so ``derive_key(seed, np.arange(n))`` gives one
    key per replicate.  Strings in the path are hashed by their bytes.
    """
    h = mix64(np.array([int(seed) & _MASK64], dtype=np.uint64) ^ _GOLDEN)
    for item in path:
        if isinstance(item, str):
            item = int.from_bytes(item.encode()[:8].ljust(8, b"\0"), "little")
        v = _as_u64(item)
        with np.errstate(over="ignore"):
            h = mix64(h ^ mix64(v + _GOLDEN))
    return h if h.shape != (1,) else h.reshape(())


def counter(event_index, slot) -> np.ndarray:
    ev = np.asarray(event_index, dtype=np.uint64)
    return (ev << np.uint64(SLOT_BITS)) | np.uint64(slot)


def bits(keys, counters) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(keys ^ mix64((counters + np.uint64(1)) * _GOLDEN))


def uniforms(keys, counters) -> np.ndarray:
    """Uniform variates on the open interval (0, 1)."""
    b = bits(keys, counters) >> _S11
    return (b.astype(np.float64) + 0.5) * 2.0**-53


def normals(keys, counters) -> np.ndarray:
    """Standard normal variates by exact inverse transform of :func:`uniforms`."""
    return ndtri(uniforms(keys, counters))


class Stream:
    """A small convenience wrapper for sequential use of one or more keys.

    ``Stream`` keeps its own running counter and hands out consecutive draws.
    The simulation kernels do not use it (they address counters explicitly);
    it is for tests, one-off sampling and resampling steps.
    """

    def __init__(self, seed: int, *path):
        self.key = derive_key(seed, *path)
        self.position = 0

    def _take(self, n: int) -> np.ndarray:
        c = np.arange(self.position, self.position + n, dtype=np.uint64)
        self.position += n
        return c

    def uniform(self, size: int | tuple = ()) -> np.ndarray:
        n = int(np.prod(size)) if size != () else 1
        u = uniforms(self.key, self._take(n))
        return u.reshape(size) if size != () else u[0]

    def normal(self, size: int | tuple = ()) -> np.ndarray:
        n = int(np.prod(size)) if size != () else 1
        z = normals(self.key, self._take(n))
        return z.reshape(size) if size != () else z[0]

    def spawn(self, *path) -> "Stream":
        child = Stream.__new__(Stream)
        child.key = derive_key(int(self.key), *path)
        child.position = 0
        return child
