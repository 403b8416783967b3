"""Kernel backend selection.

Two interchangeable backends implement the hot loops: a JIT-compiled one
(numba) and a pure-numpy one. The ``RECPREP_KERNELS`` environment
variable picks between them at import time:

- ``auto`` (default): numba when importable, else numpy
- ``numba``: require the JIT backend, fail loudly if unavailable
- ``numpy``: force the fallback

The integer kernels (bucketize, hash) are bit-identical across backends.
The log kernel is only ulp-identical: the two backends reach different
math-library code (numpy's vectorized log1p vs scalar libm), whose
results can differ by one unit in the last place of the float32 output.
Each backend is individually deterministic. Tests and the benchmark
import the backend modules directly to compare them.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import numpy_backend


def _load(choice: str) -> ModuleType:
    if choice == "numpy":
        return numpy_backend
    if choice == "numba":
        from . import numba_backend

        return numba_backend
    if choice == "auto":
        try:
            from . import numba_backend

            return numba_backend
        except ImportError:
            return numpy_backend
    raise ValueError(
        f"RECPREP_KERNELS={choice!r} not recognized; expected auto, numba, or numpy"
    )


_active = _load(os.environ.get("RECPREP_KERNELS", "auto").strip().lower() or "auto")


def get_backend() -> ModuleType:
    """The active kernel backend module."""
    return _active


def backend_name() -> str:
    return _active.NAME


def select_backend(choice: str) -> ModuleType:
    """Override the active backend (used by tests and the benchmark)."""
    global _active
    _active = _load(choice)
    return _active
