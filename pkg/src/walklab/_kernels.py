"""Numba kernels for the step-intensive samplers.

The kernels re-implement the package's Philox4x64-10 stream (see
``lattice``) so each walk can be simulated at machine speed without
materializing its increments.  Bit-exact agreement with the numpy path
is enforced by tests: for any (master_seed, replica_index) the kernels
consume exactly the same direction codes as ``RngStream.directions``.

All kernels parallelize over walks; walk i uses replica ``rep0 + i``,
so results are deterministic regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, uint64

# Philox4x64 round and Weyl constants (Random123 / numpy).
_M0 = uint64(0xD2E7470EE14C6C93)
_M1 = uint64(0xCA5A826395121157)
_W0 = uint64(0x9E3779B97F4A7C15)
_W1 = uint64(0xBB67AE8584CAA73B)
_MASK32 = uint64(0xFFFFFFFF)
_U32 = uint64(32)
_U1 = uint64(1)

# Sentinel returned by first_return_times when no return was seen.
NO_RETURN = np.int64(2**62)


@njit(inline="always", cache=True)
def _mulhilo(a, b):
    lo = a * b
    ah = a >> _U32
    al = a & _MASK32
    bh = b >> _U32
    bl = b & _MASK32
    t = ah * bl + ((al * bl) >> _U32)
    hi = ah * bh + (t >> _U32) + ((al * bh + (t & _MASK32)) >> _U32)
    return hi, lo


@njit(inline="always", cache=True)
def _philox_block(ctr, k0, k1):
    """Four output words for block counter ``ctr`` (remaining counter words 0)."""
    c0 = ctr
    c1 = uint64(0)
    c2 = uint64(0)
    c3 = uint64(0)
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@njit(cache=True)
def philox_raw(seed, replica, nwords):
    """Raw word stream; equals np.random.Philox(key=[seed, replica]).random_raw."""
    out = np.empty(nwords, dtype=np.uint64)
    ctr = uint64(0)
    i = 0
    while i < nwords:
        ctr += _U1
        w0, w1, w2, w3 = _philox_block(ctr, uint64(seed), uint64(replica))
        out[i] = w0
        if i + 1 < nwords:
            out[i + 1] = w1
        if i + 2 < nwords:
            out[i + 2] = w2
        if i + 3 < nwords:
            out[i + 3] = w3
        i += 4
    return out


@njit(cache=True)
def directions_kernel(seed, replica, n, bits, mask, nd):
    """First n accepted direction codes of one stream (uint8)."""
    out = np.empty(n, dtype=np.uint8)
    ctr = uint64(0)
    per_word = 64 // np.int64(bits)
    filled = 0
    while filled < n:
        ctr += _U1
        w0, w1, w2, w3 = _philox_block(ctr, uint64(seed), uint64(replica))
        for widx in range(4):
            if widx == 0:
                w = w0
            elif widx == 1:
                w = w1
            elif widx == 2:
                w = w2
            else:
                w = w3
            for _ in range(per_word):
                code = w & mask
                w >>= bits
                if code >= nd:
                    continue
                if filled < n:
                    out[filled] = np.uint8(code)
                    filled += 1
        # word-aligned: trailing chunks of the final word are dropped
    return out


@njit(parallel=True, cache=True, nogil=True)
def first_return_times(seed, rep0, m, d, cap, bits, mask, nd):
    """First return time to the origin for m independent walks.

    Scans at most ``cap`` steps (plus the tail of the final word); the
    sentinel NO_RETURN marks walks with no return within the scan.
    """
    out = np.empty(m, dtype=np.int64)
    for i in prange(m):
        key1 = rep0 + uint64(i)
        coords = np.zeros(d, dtype=np.int64)
        nz = 0  # nonzero coordinates; at origin iff nz == 0
        ret = NO_RETURN
        t = np.int64(0)
        ctr = uint64(0)
        done = False
        while not done:
            ctr += _U1
            w0, w1, w2, w3 = _philox_block(ctr, uint64(seed), key1)
            for widx in range(4):
                if widx == 0:
                    w = w0
                elif widx == 1:
                    w = w1
                elif widx == 2:
                    w = w2
                else:
                    w = w3
                for _ in range(64 // np.int64(bits)):
                    code = w & mask
                    w >>= bits
                    if code >= nd:
                        continue
                    t += 1
                    axis = np.int64(code >> _U1)
                    old = coords[axis]
                    if code & _U1:
                        new = old - 1
                    else:
                        new = old + 1
                    coords[axis] = new
                    if old == 0:
                        nz += 1
                    elif new == 0:
                        nz -= 1
                        if nz == 0:
                            ret = t
                            done = True
                            break
                if done:
                    break
            if t >= cap:
                done = True
        out[i] = ret if ret <= cap else NO_RETURN
    return out


@njit(parallel=True, cache=True, nogil=True)
def origin_visit_counts(seed, rep0, m, d, n, bits, mask, nd):
    """Visits to the origin during times 0..n-1 for m independent walks."""
    out = np.empty(m, dtype=np.int64)
    for i in prange(m):
        key1 = rep0 + uint64(i)
        coords = np.zeros(d, dtype=np.int64)
        nz = 0
        visits = np.int64(1)  # S(0) = 0
        t = np.int64(0)
        steps = n - 1  # positions S(1)..S(n-1)
        ctr = uint64(0)
        while t < steps:
            ctr += _U1
            w0, w1, w2, w3 = _philox_block(ctr, uint64(seed), key1)
            for widx in range(4):
                if widx == 0:
                    w = w0
                elif widx == 1:
                    w = w1
                elif widx == 2:
                    w = w2
                else:
                    w = w3
                for _ in range(64 // np.int64(bits)):
                    code = w & mask
                    w >>= bits
                    if code >= nd:
                        continue
                    t += 1
                    axis = np.int64(code >> _U1)
                    old = coords[axis]
                    if code & _U1:
                        new = old - 1
                    else:
                        new = old + 1
                    coords[axis] = new
                    if old == 0:
                        nz += 1
                    elif new == 0:
                        nz -= 1
                        if nz == 0:
                            visits += 1
                    if t >= steps:
                        break
                if t >= steps:
                    break
        out[i] = visits
    return out


@njit(parallel=True, cache=True, nogil=True)
def confined_accepts(seed, rep0, m, d, n, r2, bits, mask, nd):
    """1 for walks staying in the Euclidean ball of squared radius r2 for n steps."""
    out = np.zeros(m, dtype=np.uint8)
    for i in prange(m):
        key1 = rep0 + uint64(i)
        coords = np.zeros(d, dtype=np.int64)
        ss = np.int64(0)  # squared norm of the current position
        t = np.int64(0)
        ctr = uint64(0)
        ok = True
        while ok and t < n:
            ctr += _U1
            w0, w1, w2, w3 = _philox_block(ctr, uint64(seed), key1)
            for widx in range(4):
                if widx == 0:
                    w = w0
                elif widx == 1:
                    w = w1
                elif widx == 2:
                    w = w2
                else:
                    w = w3
                for _ in range(64 // np.int64(bits)):
                    code = w & mask
                    w >>= bits
                    if code >= nd:
                        continue
                    t += 1
                    axis = np.int64(code >> _U1)
                    old = coords[axis]
                    if code & _U1:
                        new = old - 1
                    else:
                        new = old + 1
                    coords[axis] = new
                    ss += new * new - old * old
                    if ss > r2:
                        ok = False
                        break
                    if t >= n:
                        break
                if not ok or t >= n:
                    break
        if ok:
            out[i] = 1
    return out
