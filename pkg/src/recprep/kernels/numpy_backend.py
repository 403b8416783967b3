"""Pure-numpy transform kernels (the fallback backend).

Every function here has a signature-identical twin in ``numba_backend``.
Integer kernels are bit-exact across the two; log1p is within one ulp
(see the package docstring). Keep them in lockstep.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

_FNV_PRIME = np.uint64(1099511628211)
_BYTE_MASK = np.uint64(0xFF)


def bucketize_block(values: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    """Per-element count of boundaries <= value (ties go to the upper bucket)."""
    return np.searchsorted(boundaries, values, side="right").astype(np.uint64)


def hash_mod_block(ids: np.ndarray, seed_state: np.uint64, modulus: np.uint64) -> np.ndarray:
    """FNV-1a over each id's 8 little-endian bytes, then mod.

    ``seed_state`` is the hash state after folding in the seed's own 8
    bytes; starting from it makes the whole 16-byte seeded hash one pass.
    uint64 array arithmetic wraps mod 2^64, which is exactly FNV's rule.
    """
    h = np.full(ids.shape[0], seed_state, dtype=np.uint64)
    for k in range(8):
        h = (h ^ ((ids >> np.uint64(8 * k)) & _BYTE_MASK)) * _FNV_PRIME
    return h % modulus


def log1p_block(values: np.ndarray) -> np.ndarray:
    """ln(1 + max(x, 0)) computed in float64, returned as float32.

    Adding +0.0 after the clamp pins -0.0 inputs to +0.0 output so both
    backends agree bit-exactly.
    """
    clamped = np.maximum(values.astype(np.float64), 0.0) + 0.0
    return np.log1p(clamped).astype(np.float32)
