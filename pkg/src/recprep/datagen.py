"""Deterministic synthetic raw-feature tables.

Dense values are uniform over [0, 1e6). Sparse IDs are uniform over
[0, 2^63). Per-row sparse lengths follow a shifted Poisson law,
``1 + Poisson(mean - 1)``, which has support >= 1 and the requested mean
and degenerates to a fixed length of 1 when the mean is 1.

All randomness flows through a PCG64 stream; partition ``p`` of a run
seeded with ``s`` uses the stream seeded ``s XOR p``, so partitions can
be generated independently and in any order with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schema import DENSE_VALUE_RANGE, FeatureSchema
from .tables import RawTable, SparseColumn

SPARSE_ID_RANGE = 1 << 63


@dataclass(frozen=True)
class LengthLaw:
    """Distribution of per-row sparse list lengths: 1 + Poisson(mean - 1)."""

    mean: float

    def __post_init__(self):
        if self.mean < 1:
            raise ValueError(f"length law mean must be >= 1, got {self.mean}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.mean == 1.0:
            return np.ones(size, dtype=np.uint64)
        return (1 + rng.poisson(self.mean - 1.0, size=size)).astype(np.uint64)


def sample_length(law: LengthLaw, rng: np.random.Generator) -> int:
    """Draw one row length from the law."""
    return int(law.sample(rng, 1)[0])


@dataclass(frozen=True)
class GenSpec:
    """How much data to generate and from which stream."""

    num_rows: int
    rng_seed: int
    length_law: LengthLaw | None = field(default=None)

    def law_for(self, schema: FeatureSchema) -> LengthLaw:
        if self.length_law is not None:
            return self.length_law
        return LengthLaw(mean=schema.avg_sparse_len)


def partition_rng(rng_seed: int, partition_id: int) -> np.random.Generator:
    """Independent per-partition stream: PCG64 seeded with seed XOR id."""
    return np.random.Generator(np.random.PCG64(rng_seed ^ partition_id))


def generate(schema: FeatureSchema, spec: GenSpec, partition_id: int = 0) -> RawTable:
    """Generate one raw table (one partition's worth of rows).

    Deterministic in (schema, spec, partition_id). Draw order is fixed:
    dense columns in index order, then per sparse column its lengths
    followed by its values.
    """
    if spec.num_rows < 1:
        raise ValueError(f"num_rows must be >= 1, got {spec.num_rows}")
    rng = partition_rng(spec.rng_seed, partition_id)
    law = spec.law_for(schema)
    n = spec.num_rows

    dense = [
        (rng.random(n, dtype=np.float64) * DENSE_VALUE_RANGE).astype(np.float32)
        for _ in range(schema.num_dense)
    ]

    sparse = []
    for _ in range(schema.num_sparse):
        lengths = law.sample(rng, n)
        offsets = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(lengths, out=offsets[1:])
        total = int(offsets[-1])
        values = rng.integers(0, SPARSE_ID_RANGE, size=total, dtype=np.uint64)
        sparse.append(SparseColumn(offsets=offsets, values=values))

    return RawTable(num_rows=n, dense=dense, sparse=sparse)
