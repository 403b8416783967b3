"""Feature transforms: bucketize, seeded hashing, log normalization, and
mini-batch assembly.

The scalar functions here (``search_bucket_id``, ``compute_hash``) are
the portable reference semantics; the block operations route through the
selected kernel backend and must agree with the scalars bit-exactly.

Hash definition: FNV-1a 64-bit over the 16-byte little-endian
concatenation of (seed, id), offset basis 14695981039346656037, prime
1099511628211. Hashed indices are reduced mod the feature's max value.

Bucket rule: a value equal to a boundary belongs to the upper bucket,
so the bucket index is the count of boundaries <= x, in [0, m].
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .schema import FeatureSchema, TransformPlan
from .tables import RawTable, SparseColumn
from .timings import StageTimings

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class HashParams:
    """Seed and modulus for one feature's hashing step."""

    seed: int
    max_value: int

    def __post_init__(self):
        if self.max_value < 1:
            raise ValueError(f"max_value must be >= 1, got {self.max_value}")


def compute_hash(id_value: int, seed: int) -> int:
    """Seeded 64-bit hash of one ID (scalar reference implementation)."""
    h = FNV_OFFSET_BASIS
    data = (seed & _MASK64).to_bytes(8, "little") + (id_value & _MASK64).to_bytes(8, "little")
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def fold_seed(seed: int) -> int:
    """Hash state after absorbing the seed's 8 bytes.

    Block hashing starts from this state, so the per-id work is a single
    8-byte pass; by FNV's sequential definition the result equals
    ``compute_hash`` over the full 16 bytes.
    """
    h = FNV_OFFSET_BASIS
    for byte in (seed & _MASK64).to_bytes(8, "little"):
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def search_bucket_id(x: float, boundaries: np.ndarray) -> int:
    """Index of the bucket containing x: count of boundaries <= x.

    Binary search over the ascending boundary array; total over all
    reals, with results in [0, len(boundaries)].
    """
    lo = 0
    hi = len(boundaries)
    while lo < hi:
        mid = (lo + hi) >> 1
        if boundaries[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def bucketize(col: np.ndarray, boundaries: np.ndarray) -> SparseColumn:
    """Map a dense column to one bucket index per row (a length-1 jagged column)."""
    values = kernels.get_backend().bucketize_block(
        np.ascontiguousarray(col, dtype=np.float32),
        np.ascontiguousarray(boundaries, dtype=np.float32),
    )
    offsets = np.arange(len(col) + 1, dtype=np.uint64)
    return SparseColumn(offsets=offsets, values=values)


def sigrid_hash(col: SparseColumn, params: HashParams) -> SparseColumn:
    """Hash every ID and reduce it below params.max_value; offsets pass through."""
    values = kernels.get_backend().hash_mod_block(
        np.ascontiguousarray(col.values, dtype=np.uint64),
        np.uint64(fold_seed(params.seed)),
        np.uint64(params.max_value),
    )
    return SparseColumn(offsets=col.offsets, values=values)


def log_normalize(col: np.ndarray) -> np.ndarray:
    """ln(1 + max(x, 0)) per element, float32 out."""
    return kernels.get_backend().log1p_block(np.ascontiguousarray(col, dtype=np.float32))


@dataclass(frozen=True)
class MiniBatch:
    """One training-ready batch: a dense matrix plus hashed sparse features."""

    seq_no: int
    dense: np.ndarray  # float32, shape (rows, num_dense), row-major
    sparse: list[SparseColumn]

    @property
    def num_rows(self) -> int:
        return self.dense.shape[0]

    def iter_buffers(self):
        """Canonical serialization order: dense block, then per-feature
        offsets and values blocks, all little-endian."""
        yield np.ascontiguousarray(self.dense).astype("<f4", copy=False)
        for col in self.sparse:
            yield np.ascontiguousarray(col.offsets).astype("<u8", copy=False)
            yield np.ascontiguousarray(col.values).astype("<u8", copy=False)

    @property
    def nbytes(self) -> int:
        return sum(buf.nbytes for buf in self.iter_buffers())

    def to_bytes(self) -> bytes:
        return b"".join(buf.tobytes() for buf in self.iter_buffers())

    def digest(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for buf in self.iter_buffers():
            h.update(buf)
        return h.hexdigest()

    def validate(self, schema: FeatureSchema | None = None) -> None:
        n = self.dense.shape[0]
        for col in self.sparse:
            col.validate()
            if col.num_rows != n:
                raise ValueError("sparse feature row count differs from dense matrix")
        if schema is not None:
            if self.dense.shape[1] != schema.num_dense:
                raise ValueError(
                    f"dense matrix has {self.dense.shape[1]} columns, schema says {schema.num_dense}"
                )
            if len(self.sparse) != schema.num_output_sparse:
                raise ValueError(
                    f"{len(self.sparse)} sparse features, schema says {schema.num_output_sparse}"
                )


def assemble_minibatch(
    seq_no: int,
    dense_cols: list[np.ndarray],
    sparse_cols: list[SparseColumn],
    schema: FeatureSchema | None = None,
) -> MiniBatch:
    """Interleave dense columns into a row-major matrix and attach sparse features."""
    row_counts = {len(c) for c in dense_cols} | {c.num_rows for c in sparse_cols}
    if len(row_counts) > 1:
        raise ValueError(f"column row counts disagree: {sorted(row_counts)}")
    if dense_cols:
        dense = np.ascontiguousarray(np.stack(dense_cols, axis=1))
    else:
        n = sparse_cols[0].num_rows if sparse_cols else 0
        dense = np.empty((n, 0), dtype=np.float32)
    batch = MiniBatch(seq_no=seq_no, dense=dense, sparse=list(sparse_cols))
    batch.validate(schema)
    return batch


def transform_partition(
    table: RawTable,
    plan: TransformPlan,
    schema: FeatureSchema,
    seq_no: int = 0,
    timings: StageTimings | None = None,
) -> MiniBatch:
    """Full transform of one partition into a mini-batch.

    Order of operations: bucketize planned dense columns into generated
    sparse features, hash all sparse features (originals first, then
    generated), log-normalize every dense column, assemble. All steps
    are pure, so feature-level scheduling cannot change the result.
    """
    if len(table.dense) != schema.num_dense or len(table.sparse) != schema.num_sparse:
        raise ValueError(
            f"table shape ({len(table.dense)} dense, {len(table.sparse)} sparse) "
            f"does not match schema ({schema.num_dense}, {schema.num_sparse})"
        )

    t0 = time.perf_counter()
    generated = [bucketize(table.dense[bs.dense_index], bs.boundaries) for bs in plan.bucketize_specs]
    t1 = time.perf_counter()

    pre_hash = list(table.sparse) + generated
    if len(plan.hash_specs) != len(pre_hash):
        raise ValueError(f"plan has {len(plan.hash_specs)} hash specs for {len(pre_hash)} sparse features")
    hashed = [
        sigrid_hash(pre_hash[hs.sparse_index], HashParams(hs.seed, hs.max_value))
        for hs in plan.hash_specs
    ]
    t2 = time.perf_counter()

    dense_out = [log_normalize(table.dense[i]) for i in plan.log_specs]
    t3 = time.perf_counter()

    batch = assemble_minibatch(seq_no, dense_out, hashed, schema)
    t4 = time.perf_counter()

    if timings is not None:
        timings.add("bucketize", t1 - t0)
        timings.add("sigridhash", t2 - t1)
        timings.add("log", t3 - t2)
        timings.add("batch_convert", t4 - t3)
    return batch
