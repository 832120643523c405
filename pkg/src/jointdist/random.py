"""Counter-based random streams.

Every random number is a pure function of ``(key, element index, round, slot)``
computed by the Philox-4x32-10 block cipher, so draws are reproducible,
vectorize over arbitrary arrays of keys, and do not depend on evaluation
order. A stream hands out one fresh key per sampling call.

A ``BatchedStream`` carries one key per world. World ``i`` of a batched stream
produces exactly the draws that ``RandomStream.from_key(keys[i])`` would.
"""

from __future__ import annotations

import numbers

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)

# Counter word 3 tags; distinct tags never collide for the same key.
SLOT_FOLD = 0x7F000001
SLOT_SEED = 0x7F000002


def _u64(x):
    return np.asarray(x, dtype=np.uint64)


def philox4x32(counter, key, rounds=10):
    """Philox-4x32 block function on uint64 arrays holding 32-bit words.

    Args:
      counter: four broadcast-compatible arrays (words c0..c3).
      key: two arrays (words k0, k1).

    Returns:
      tuple of four uint64 arrays of 32-bit output words.
    """
    c0, c1, c2, c3 = (_u64(c) & _MASK32 for c in counter)
    k0, k1 = (_u64(k) & _MASK32 for k in key)
    for _ in range(rounds):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + _PHILOX_W0) & _MASK32
        k1 = (k1 + _PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


def _split_key(key):
    key = _u64(key)
    return key & _MASK32, key >> _SHIFT32


def _hash64(key, data, slot):
    data = _u64(data)
    w = philox4x32((data & _MASK32, data >> _SHIFT32, 0, slot), _split_key(key))
    return w[0] | (w[1] << _SHIFT32)


def fold_in(key, data):
    """Derive a new key from ``key`` and integer ``data`` (both may be arrays)."""
    return _hash64(key, data, SLOT_FOLD)


def seed_to_key(seed):
    if not isinstance(seed, (numbers.Integral, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return _hash64(np.uint64(int(seed) % (1 << 64)), 0, SLOT_SEED)


_TWO_M53 = 1.0 / 9007199254740992.0


def _to_unit(hi, lo):
    # 27 + 26 bits -> 53-bit mantissa, offset by half a step: strictly inside (0, 1).
    bits = ((hi >> np.uint64(5)) << np.uint64(26)) | (lo >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * _TWO_M53


def uniform_pair(keys, index, round_=0, slot=0):
    """Two independent open-interval uniforms per element."""
    index = _u64(index)
    w = philox4x32(
        (index & _MASK32, index >> _SHIFT32, round_, slot), _split_key(keys)
    )
    return _to_unit(w[0], w[1]), _to_unit(w[2], w[3])


class RandomStream:
    """A caller-owned, deterministic source of per-call keys.

    >>> s = RandomStream(7)
    >>> k1, k2 = s.next_key(), s.next_key()
    """

    batched = False
    batch_size = None

    def __init__(self, seed):
        self._key = seed_to_key(seed)
        self._count = 0

    @classmethod
    def from_key(cls, key):
        s = cls.__new__(cls)
        s._key = _u64(key)
        s._count = 0
        return s

    @property
    def key(self):
        return self._key

    def next_key(self):
        k = fold_in(self._key, self._count)
        self._count += 1
        return k

    def split(self, n):
        """A batched stream of ``n`` worlds keyed by ``fold_in(next_key(), i)``."""
        base = self.next_key()
        return BatchedStream(fold_in(base, np.arange(int(n), dtype=np.uint64)))


class BatchedStream:
    """One independent stream per world, advanced in lockstep."""

    batched = True

    def __init__(self, keys):
        keys = _u64(keys)
        if keys.ndim != 1 or keys.size == 0:
            raise ValueError("BatchedStream needs a non-empty 1-D array of keys")
        self._keys = keys
        self._count = 0

    @property
    def keys(self):
        return self._keys

    @property
    def batch_size(self):
        return self._keys.shape[0]

    def next_key(self):
        k = fold_in(self._keys, self._count)
        self._count += 1
        return k

    def world(self, i):
        """The single-world stream equivalent to world ``i`` (from the start)."""
        return RandomStream.from_key(self._keys[i])


def as_stream(seed):
    """Accept a stream or an integer seed; ``None`` is rejected.

    There is deliberately no ambient global generator.
    """
    if isinstance(seed, (RandomStream, BatchedStream)):
        return seed
    if seed is None:
        raise ValueError("sampling needs an explicit seed or RandomStream")
    return RandomStream(seed)
