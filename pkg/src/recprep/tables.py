"""In-memory column containers shared by the generator, storage, and transforms.

A raw feature table holds dense columns (one float32 array per feature)
and sparse columns (jagged uint64 ID lists in offsets+values form). The
offsets array has ``num_rows + 1`` entries; row ``i`` owns
``values[offsets[i]:offsets[i+1]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SparseColumn:
    """One jagged column of 64-bit IDs in offsets+values form."""

    offsets: np.ndarray  # uint64, shape (num_rows + 1,), offsets[0] == 0
    values: np.ndarray  # uint64, shape (offsets[-1],)

    @property
    def num_rows(self) -> int:
        return len(self.offsets) - 1

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def row(self, i: int) -> np.ndarray:
        return self.values[int(self.offsets[i]) : int(self.offsets[i + 1])]

    @property
    def nbytes(self) -> int:
        return self.offsets.nbytes + self.values.nbytes

    def validate(self) -> None:
        if self.offsets.dtype != np.uint64 or self.values.dtype != np.uint64:
            raise ValueError("sparse column arrays must be uint64")
        if len(self.offsets) < 1 or self.offsets[0] != 0:
            raise ValueError("offsets must start at 0")
        if np.any(np.diff(self.offsets.astype(np.int64)) < 0):
            raise ValueError("offsets must be nondecreasing")
        if int(self.offsets[-1]) != len(self.values):
            raise ValueError("final offset must equal values length")

    def slice_rows(self, start: int, stop: int) -> "SparseColumn":
        lo = int(self.offsets[start])
        hi = int(self.offsets[stop])
        return SparseColumn(
            offsets=(self.offsets[start : stop + 1] - np.uint64(lo)),
            values=self.values[lo:hi].copy(),
        )


def sparse_from_rows(rows: list[list[int]]) -> SparseColumn:
    """Build a SparseColumn from per-row ID lists (test/fixture helper)."""
    lengths = np.array([len(r) for r in rows], dtype=np.uint64)
    offsets = np.zeros(len(rows) + 1, dtype=np.uint64)
    np.cumsum(lengths, out=offsets[1:])
    flat = [v for r in rows for v in r]
    return SparseColumn(offsets=offsets, values=np.array(flat, dtype=np.uint64))


@dataclass(frozen=True)
class RawTable:
    """A raw feature table: dense float32 columns plus sparse ID columns."""

    num_rows: int
    dense: list[np.ndarray]  # each float32, shape (num_rows,)
    sparse: list[SparseColumn]

    def validate(self) -> None:
        for i, col in enumerate(self.dense):
            if col.dtype != np.float32:
                raise ValueError(f"dense column {i} must be float32")
            if len(col) != self.num_rows:
                raise ValueError(f"dense column {i} has {len(col)} rows, expected {self.num_rows}")
        for i, col in enumerate(self.sparse):
            col.validate()
            if col.num_rows != self.num_rows:
                raise ValueError(f"sparse column {i} has {col.num_rows} rows, expected {self.num_rows}")

    def slice_rows(self, start: int, stop: int) -> "RawTable":
        return RawTable(
            num_rows=stop - start,
            dense=[c[start:stop].copy() for c in self.dense],
            sparse=[c.slice_rows(start, stop) for c in self.sparse],
        )


def concat_tables(parts: list[RawTable]) -> RawTable:
    """Concatenate row-disjoint tables back together (inverse of sharding)."""
    if not parts:
        raise ValueError("nothing to concatenate")
    num_dense = len(parts[0].dense)
    num_sparse = len(parts[0].sparse)
    dense = [np.concatenate([p.dense[i] for p in parts]) for i in range(num_dense)]
    sparse = []
    for i in range(num_sparse):
        cols = [p.sparse[i] for p in parts]
        values = np.concatenate([c.values for c in cols])
        offsets = np.zeros(sum(c.num_rows for c in cols) + 1, dtype=np.uint64)
        pos = 1
        base = np.uint64(0)
        for c in cols:
            n = c.num_rows
            offsets[pos : pos + n] = c.offsets[1:] + base
            base += c.offsets[-1]
            pos += n
        sparse.append(SparseColumn(offsets=offsets, values=values))
    return RawTable(num_rows=sum(p.num_rows for p in parts), dense=dense, sparse=sparse)


def tables_equal(a: RawTable, b: RawTable) -> bool:
    """Bit-exact logical equality of two tables."""
    if a.num_rows != b.num_rows or len(a.dense) != len(b.dense) or len(a.sparse) != len(b.sparse):
        return False
    for x, y in zip(a.dense, b.dense):
        if not np.array_equal(x.view(np.uint32), y.view(np.uint32)):
            return False
    for x, y in zip(a.sparse, b.sparse):
        if not (np.array_equal(x.offsets, y.offsets) and np.array_equal(x.values, y.values)):
            return False
    return True
