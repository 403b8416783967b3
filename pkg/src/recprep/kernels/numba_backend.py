"""JIT-compiled transform kernels.

Same contracts as ``numpy_backend``; see there for the semantics. These
release the GIL (``nogil=True``) so the threaded pipeline can overlap
transform work across workers, and cache compiled code on disk.

Importing this module raises ImportError when numba is unavailable; the
package-level dispatcher handles the fallback.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, nogil=True)
def bucketize_block(values, boundaries):
    n = values.shape[0]
    m = boundaries.shape[0]
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        x = values[i]
        lo = 0
        hi = m
        while lo < hi:
            mid = (lo + hi) >> 1
            if boundaries[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        out[i] = lo
    return out


@njit(cache=True, nogil=True)
def hash_mod_block(ids, seed_state, modulus):
    n = ids.shape[0]
    out = np.empty(n, dtype=np.uint64)
    prime = np.uint64(1099511628211)
    mask = np.uint64(0xFF)
    for i in range(n):
        h = seed_state
        v = ids[i]
        for k in range(8):
            h = (h ^ ((v >> np.uint64(8 * k)) & mask)) * prime
        out[i] = h % modulus
    return out


@njit(cache=True, nogil=True)
def log1p_block(values):
    n = values.shape[0]
    out = np.empty(n, dtype=np.float32)
    for i in range(n):
        v = float(values[i])
        if v <= 0.0:
            # clamp; the <= also pins -0.0 inputs to a +0.0 result
            v = 0.0
        out[i] = np.float32(math.log1p(v))
    return out


def warm_up() -> None:
    """Force compilation of all kernels (first call is otherwise slow)."""
    bucketize_block(np.zeros(1, dtype=np.float32), np.zeros(1, dtype=np.float32))
    hash_mod_block(np.zeros(1, dtype=np.uint64), np.uint64(1), np.uint64(7))
    log1p_block(np.zeros(1, dtype=np.float32))
