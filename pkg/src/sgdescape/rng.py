"""Counter-based random streams.

Every Monte Carlo trial owns an independent stream identified by
``(master_seed, stream_id)``. A stream is the raw output of the
Philox4x64-10 block cipher keyed with ``(master_seed, stream_id)``, i.e. the
same 64-bit words that ``numpy.random.Philox(key=[master_seed, stream_id])``
emits. Words are turned into standard normals with the Box-Muller transform,
four normals per cipher block. Normal number ``j`` of a stream is therefore a
pure function of ``(master_seed, stream_id, j)``, which is what makes trial
results independent of scheduling and worker count.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

SEED_MAX = 2**64 - 1


@nb.njit(inline="always", cache=True)
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * b


@nb.njit(inline="always", cache=True)
def _philox(key0, key1, block):
    # block j encrypts counter (j + 1, 0, 0, 0), numpy's pre-increment convention
    c0 = np.uint64(block) + np.uint64(1)
    c1 = np.uint64(0)
    c2 = np.uint64(0)
    c3 = np.uint64(0)
    k0 = np.uint64(key0)
    k1 = np.uint64(key1)
    for r in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        if r < 9:
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


@nb.njit(cache=True)
def philox_block(key0, key1, block, out):
    """Write the four raw words of cipher block ``block`` into ``out``.

    Block 0 is numpy's first output block for the same key.
    """
    out[0], out[1], out[2], out[3] = _philox(key0, key1, block)


@nb.njit(inline="always", cache=True)
def _box_muller(w1, w2):
    u1 = 1.0 - (w1 >> _S11) * _TWO_M53
    u2 = (w2 >> _S11) * _TWO_M53
    rad = math.sqrt(-2.0 * math.log(u1))
    return rad * math.cos(_TWO_PI * u2), rad * math.sin(_TWO_PI * u2)


@nb.njit(inline="always", cache=True)
def normal_block(key0, key1, block, out):
    """Write the four standard normals of ``block`` into ``out``."""
    w0, w1, w2, w3 = _philox(key0, key1, block)
    out[0], out[1] = _box_muller(w0, w1)
    out[2], out[3] = _box_muller(w2, w3)


@nb.njit(cache=True)
def fill_normals(key0, key1, start, out):
    """Fill ``out`` with normals ``start, start + 1, ...`` of a stream."""
    buf = np.empty(4, dtype=np.float64)
    n = out.shape[0]
    i = 0
    block = start // 4
    offset = start - 4 * block
    while i < n:
        normal_block(key0, key1, block, buf)
        for j in range(offset, 4):
            if i >= n:
                break
            out[i] = buf[j]
            i += 1
        offset = 0
        block += 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


class RngStream:
    """Random-access view of one stream ``(seed, stream_id)``.

    The stream holds no cursor; callers address normals by index. Dynamics
    use normals ``[k*d, (k+1)*d)`` for step ``k`` of a ``d``-dimensional
    system.
    """

    __slots__ = ("seed", "stream_id")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = check_seed(seed)
        self.stream_id = check_seed(stream_id)

    def normals(self, start: int, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.float64)
        if count:
            fill_normals(np.uint64(self.seed), np.uint64(self.stream_id), np.int64(start), out)
        return out

    def raw_block(self, block: int) -> np.ndarray:
        out = np.empty(4, dtype=np.uint64)
        philox_block(np.uint64(self.seed), np.uint64(self.stream_id), np.int64(block), out)
        return out

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
