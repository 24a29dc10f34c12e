"""Counter-based random numbers.

Every draw is a pure function of ``(key, counter)``, so any layer of an
environment or any step of any walk can be regenerated in isolation and in
any order. The mixing function is the splitmix64 finalizer; keys are derived
by chaining it over the integers that identify a stream.

Two equivalent implementations are kept: vectorised numpy for bulk
environment generation and scalar numba for use inside simulation kernels.
``tests/test_rng.py`` pins them against each other.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

# stream tags, fixed forever: changing one changes every sampled environment
STREAM_LAYER = 1
STREAM_SITE = 2
STREAM_WALK = 3
STREAM_ENVSEED = 4


def _as_u64(x):
    return np.asarray(x, dtype=np.int64).view(np.uint64)


def mix64(z):
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(*parts):
    """Fold a sequence of signed integers into one 64-bit key."""
    k = np.uint64(0)
    with np.errstate(over="ignore"):
        for p in parts:
            k = mix64(k ^ (_as_u64(int(p)) + _GOLDEN))
    return int(k)


def uniforms(key, counters):
    """Uniform doubles in [0, 1), one per counter (signed integers allowed)."""
    c = _as_u64(counters)
    with np.errstate(over="ignore"):
        z = mix64(np.uint64(key) ^ mix64(c + _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


@njit(cache=True, inline="always")
def nb_mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def nb_uniform(key, counter):
    c = np.uint64(np.int64(counter))
    z = nb_mix64(np.uint64(key) ^ nb_mix64(c + np.uint64(0x9E3779B97F4A7C15)))
    return np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def nb_derive_key2(key, part):
    return nb_mix64(np.uint64(key) ^ (np.uint64(np.int64(part)) + np.uint64(0x9E3779B97F4A7C15)))


def env_seed(seed, index):
    """Seed of the ``index``-th environment drawn from a master seed."""
    return derive_key(STREAM_ENVSEED, seed, index) & 0x7FFFFFFFFFFFFFFF


def walk_key(seed, walk_id):
    return derive_key(STREAM_WALK, seed, walk_id)


def walk_keys(seed, walk_ids) -> np.ndarray:
    """``walk_key`` over an array of walk ids."""
    ids = _as_u64(np.asarray(walk_ids, dtype=np.int64))
    k = np.uint64(0)
    with np.errstate(over="ignore"):
        for p in (STREAM_WALK, seed):
            k = mix64(k ^ (_as_u64(int(p)) + _GOLDEN))
        return mix64(k ^ (ids + _GOLDEN))
