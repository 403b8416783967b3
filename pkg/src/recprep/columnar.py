"""PSF1: a self-describing single-file columnar partition format.

One file holds one partition (one mini-batch worth of rows). Layout,
little-endian throughout::

    "PSF1"                                  4-byte magic
    chunk 0, chunk 1, ...                   one chunk per feature, contiguous
    footer entry per chunk                  30 bytes each, see _FOOTER_ENTRY
    footer byte-length                      u32
    "PSF1"                                  4-byte trailing magic

A footer entry is (feature_id u32, kind u8, encoding u8, offset u64,
length u64, row_count u64). Chunks appear in ascending feature-id order
and tile the region between header and footer exactly.

Feature ids: dense feature j has id j; sparse feature k has id
num_dense + k. Chunk payloads:

- dense plain: row_count float32 values
- sparse plain: (row_count + 1) u64 offsets, then u64 values
- dictionary: u32 dict_len, dict values (element width * dict_len),
  then per-value indices at the smallest width that can address the
  dictionary (u8 when dict_len <= 256, u16 when <= 65536, else u32).
  For sparse chunks the offsets block stays plain and the dictionary
  structure replaces the values block.

Readers validate the footer aggressively (magics, entry alignment,
exact chunk tiling, enum tags, uniform row counts, payload-size
formulas) so a corrupted file fails loudly instead of mis-decoding.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import FormatError, UnknownFeatureError
from .schema import FeatureSchema, validate_config
from .tables import RawTable, SparseColumn
from .timings import StageTimings

MAGIC = b"PSF1"
_FOOTER_ENTRY = struct.Struct("<IBBQQQ")
FOOTER_ENTRY_SIZE = _FOOTER_ENTRY.size  # 30
_U32 = struct.Struct("<I")


class ColumnKind(IntEnum):
    DENSE = 0
    SPARSE = 1


class Encoding(IntEnum):
    PLAIN = 0
    DICTIONARY = 1


@dataclass(frozen=True)
class ChunkMeta:
    feature_id: int
    kind: ColumnKind
    encoding: Encoding
    offset: int
    length: int
    row_count: int


@dataclass
class IoStats:
    """Byte accounting for one reader (footer and chunk reads separately)."""

    bytes_read: int = 0
    read_calls: int = 0
    footer_bytes: int = 0
    chunk_bytes: int = 0

    def record(self, n: int, *, footer: bool) -> None:
        self.bytes_read += n
        self.read_calls += 1
        if footer:
            self.footer_bytes += n
        else:
            self.chunk_bytes += n


def _index_dtype(dict_len: int) -> np.dtype:
    if dict_len <= 1 << 8:
        return np.dtype("<u1")
    if dict_len <= 1 << 16:
        return np.dtype("<u2")
    return np.dtype("<u4")


def _le(arr: np.ndarray, dt: str) -> np.ndarray:
    return np.ascontiguousarray(arr).astype(dt, copy=False)


def _encode_values_dict(values: np.ndarray, dt: str) -> bytes:
    # deduplicate by bit pattern, not numeric equality, so payloads that
    # distinguish -0.0 from +0.0 (or NaN payloads) round-trip bit-exactly
    bits_dt = "<u4" if np.dtype(dt).itemsize == 4 else "<u8"
    bits = _le(values, dt).view(bits_dt)
    dictionary, inverse = np.unique(bits, return_inverse=True)
    idx = inverse.astype(_index_dtype(len(dictionary)))
    return _U32.pack(len(dictionary)) + dictionary.tobytes() + idx.tobytes()


def _decode_values_dict(payload: memoryview, dt: str, expected_count: int) -> np.ndarray:
    if len(payload) < 4:
        raise FormatError("dictionary chunk truncated before length field")
    (dict_len,) = _U32.unpack(payload[:4])
    width = np.dtype(dt).itemsize
    idx_dt = _index_dtype(dict_len)
    need = 4 + dict_len * width + expected_count * idx_dt.itemsize
    if len(payload) != need:
        raise FormatError(
            f"dictionary chunk size {len(payload)} != expected {need} "
            f"(dict_len={dict_len}, values={expected_count})"
        )
    dictionary = np.frombuffer(payload, dtype=dt, count=dict_len, offset=4)
    idx = np.frombuffer(payload, dtype=idx_dt, count=expected_count, offset=4 + dict_len * width)
    if expected_count and (dict_len == 0 or int(idx.max()) >= dict_len):
        raise FormatError("dictionary index out of range")
    return dictionary[idx]


def encode_chunk(column, kind: ColumnKind, encoding: Encoding) -> bytes:
    """Serialize one column into a chunk payload."""
    if kind == ColumnKind.DENSE:
        values = _le(column, "<f4")
        if encoding == Encoding.PLAIN:
            return values.tobytes()
        return _encode_values_dict(values, "<f4")
    offsets = _le(column.offsets, "<u8").tobytes()
    values = _le(column.values, "<u8")
    if encoding == Encoding.PLAIN:
        return offsets + values.tobytes()
    return offsets + _encode_values_dict(values, "<u8")


def choose_encoding(column, kind: ColumnKind) -> Encoding:
    """Pick the smaller of plain and dictionary for this column."""
    plain = len(encode_chunk(column, kind, Encoding.PLAIN))
    dictionary = len(encode_chunk(column, kind, Encoding.DICTIONARY))
    return Encoding.DICTIONARY if dictionary < plain else Encoding.PLAIN


def decode_chunk(payload: bytes | memoryview, kind: ColumnKind, encoding: Encoding, row_count: int):
    """Decode one chunk payload back into a column.

    Dense chunks return a float32 array; sparse chunks a SparseColumn.
    Raises FormatError on any size/shape/index inconsistency.
    """
    view = memoryview(payload)
    if kind == ColumnKind.DENSE:
        if encoding == Encoding.PLAIN:
            if len(view) != 4 * row_count:
                raise FormatError(f"dense plain chunk is {len(view)} bytes for {row_count} rows")
            return np.frombuffer(view, dtype="<f4").astype(np.float32, copy=True)
        return _decode_values_dict(view, "<f4", row_count).astype(np.float32, copy=False)

    offsets_bytes = 8 * (row_count + 1)
    if len(view) < offsets_bytes:
        raise FormatError(f"sparse chunk too small for its offsets block ({len(view)} bytes)")
    offsets = np.frombuffer(view, dtype="<u8", count=row_count + 1).astype(np.uint64, copy=True)
    if offsets[0] != 0 or np.any(np.diff(offsets.astype(np.int64)) < 0):
        raise FormatError("sparse offsets are not a nondecreasing sequence from 0")
    num_values = int(offsets[-1])
    rest = view[offsets_bytes:]
    if encoding == Encoding.PLAIN:
        if len(rest) != 8 * num_values:
            raise FormatError(f"sparse values block is {len(rest)} bytes for {num_values} values")
        values = np.frombuffer(rest, dtype="<u8").astype(np.uint64, copy=True)
    else:
        values = _decode_values_dict(rest, "<u8", num_values).astype(np.uint64, copy=False)
    return SparseColumn(offsets=offsets, values=values)


def dense_feature_id(schema: FeatureSchema, dense_index: int) -> int:
    return dense_index


def sparse_feature_id(schema: FeatureSchema, sparse_index: int) -> int:
    return schema.num_dense + sparse_index


def encode_partition(table: RawTable, schema: FeatureSchema, encoding: str = "plain") -> bytes:
    """Serialize a whole table into PSF1 file bytes.

    ``encoding`` is "plain", "dictionary", or "auto" (per column, pick
    the smaller).
    """
    if len(table.dense) != schema.num_dense or len(table.sparse) != schema.num_sparse:
        raise ValueError("table shape does not match schema")
    if encoding not in ("plain", "dictionary", "auto"):
        raise ValueError(f"unknown encoding choice {encoding!r}")

    parts: list[bytes] = [MAGIC]
    entries: list[bytes] = []
    offset = len(MAGIC)
    columns = [(dense_feature_id(schema, j), ColumnKind.DENSE, col) for j, col in enumerate(table.dense)]
    columns += [(sparse_feature_id(schema, k), ColumnKind.SPARSE, col) for k, col in enumerate(table.sparse)]
    for feature_id, kind, col in columns:
        if encoding == "auto":
            enc = choose_encoding(col, kind)
        else:
            enc = Encoding.PLAIN if encoding == "plain" else Encoding.DICTIONARY
        payload = encode_chunk(col, kind, enc)
        parts.append(payload)
        entries.append(
            _FOOTER_ENTRY.pack(feature_id, int(kind), int(enc), offset, len(payload), table.num_rows)
        )
        offset += len(payload)
    footer = b"".join(entries)
    parts.append(footer)
    parts.append(_U32.pack(len(footer)))
    parts.append(MAGIC)
    return b"".join(parts)


def write_partition(path: str | Path, table: RawTable, schema: FeatureSchema, encoding: str = "plain") -> int:
    """Write one partition file; returns its size in bytes."""
    data = encode_partition(table, schema, encoding)
    path = Path(path)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"writing partition file {path}: {exc}") from exc
    return len(data)


class PartitionReader:
    """Random access to one PSF1 file with byte-level read accounting.

    When a schema is supplied, the footer's feature ids and kinds are
    checked against it, so a file whose footer was corrupted into a
    different-but-well-formed shape is still rejected.
    """

    def __init__(self, path: str | Path, schema: FeatureSchema | None = None):
        self.path = Path(path)
        self.stats = IoStats()
        self._fh = open(self.path, "rb")
        try:
            self._meta = self._load_footer()
            if schema is not None:
                self._check_schema(schema)
        except Exception:
            self._fh.close()
            raise

    def __enter__(self) -> "PartitionReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self._fh.close()

    def _read_at(self, offset: int, length: int, *, footer: bool) -> bytes:
        self._fh.seek(offset)
        data = self._fh.read(length)
        if len(data) != length:
            raise FormatError(f"{self.path}: truncated read at {offset}")
        self.stats.record(length, footer=footer)
        return data

    def _load_footer(self) -> dict[int, ChunkMeta]:
        self._fh.seek(0, 2)
        file_size = self._fh.tell()
        if file_size < len(MAGIC) * 2 + _U32.size:
            raise FormatError(f"{self.path}: file too small to be a partition file")
        head = self._read_at(0, len(MAGIC), footer=True)
        if head != MAGIC:
            raise FormatError(f"{self.path}: bad leading magic {head!r}")
        tail = self._read_at(file_size - 8, 8, footer=True)
        if tail[4:] != MAGIC:
            raise FormatError(f"{self.path}: bad trailing magic {tail[4:]!r}")
        (footer_len,) = _U32.unpack(tail[:4])
        if footer_len % FOOTER_ENTRY_SIZE != 0:
            raise FormatError(f"{self.path}: footer length {footer_len} not a multiple of {FOOTER_ENTRY_SIZE}")
        footer_start = file_size - 8 - footer_len
        if footer_start < len(MAGIC):
            raise FormatError(f"{self.path}: footer length {footer_len} exceeds file size")
        footer = self._read_at(footer_start, footer_len, footer=True)

        meta: dict[int, ChunkMeta] = {}
        expected_offset = len(MAGIC)
        row_counts = set()
        for raw in _FOOTER_ENTRY.iter_unpack(footer):
            feature_id, kind, enc, offset, length, row_count = raw
            try:
                kind = ColumnKind(kind)
                enc = Encoding(enc)
            except ValueError:
                raise FormatError(f"{self.path}: feature {feature_id} has invalid kind/encoding tag") from None
            if feature_id in meta:
                raise FormatError(f"{self.path}: duplicate feature id {feature_id}")
            if offset != expected_offset:
                raise FormatError(
                    f"{self.path}: chunk for feature {feature_id} at offset {offset}, expected {expected_offset}"
                )
            expected_offset += length
            row_counts.add(row_count)
            meta[feature_id] = ChunkMeta(feature_id, kind, enc, offset, length, row_count)
        if not meta:
            raise FormatError(f"{self.path}: empty footer")
        if expected_offset != footer_start:
            raise FormatError(f"{self.path}: chunks end at {expected_offset}, footer starts at {footer_start}")
        if len(row_counts) != 1:
            raise FormatError(f"{self.path}: chunks disagree on row count: {sorted(row_counts)}")
        return meta

    def _check_schema(self, schema: FeatureSchema) -> None:
        expected = {dense_feature_id(schema, j): ColumnKind.DENSE for j in range(schema.num_dense)}
        expected.update(
            {sparse_feature_id(schema, k): ColumnKind.SPARSE for k in range(schema.num_sparse)}
        )
        got = {fid: m.kind for fid, m in self._meta.items()}
        if got != expected:
            raise FormatError(f"{self.path}: footer features do not match the schema")

    @property
    def feature_ids(self) -> list[int]:
        return sorted(self._meta)

    @property
    def row_count(self) -> int:
        return next(iter(self._meta.values())).row_count

    @property
    def file_size(self) -> int:
        return self.path.stat().st_size

    def read_columns(self, feature_ids, timings: StageTimings | None = None) -> dict[int, object]:
        """Read and decode only the requested features.

        Bytes touched are footer + requested chunks; IoStats accumulates.
        """
        metas = []
        for fid in feature_ids:
            if fid not in self._meta:
                raise UnknownFeatureError(f"{self.path}: no feature {fid} in footer")
            metas.append(self._meta[fid])

        t0 = time.perf_counter()
        payloads = [self._read_at(m.offset, m.length, footer=False) for m in metas]
        t1 = time.perf_counter()
        out = {
            m.feature_id: decode_chunk(payload, m.kind, m.encoding, m.row_count)
            for m, payload in zip(metas, payloads)
        }
        t2 = time.perf_counter()
        if timings is not None:
            timings.add("extract_read", t1 - t0)
            timings.add("extract_decode", t2 - t1)
        return out

    def read_table(self, schema: FeatureSchema, timings: StageTimings | None = None) -> RawTable:
        """Reconstruct the partition's full RawTable in schema order."""
        ids = [dense_feature_id(schema, j) for j in range(schema.num_dense)]
        ids += [sparse_feature_id(schema, k) for k in range(schema.num_sparse)]
        cols = self.read_columns(ids, timings=timings)
        return RawTable(
            num_rows=self.row_count,
            dense=[cols[dense_feature_id(schema, j)] for j in range(schema.num_dense)],
            sparse=[cols[sparse_feature_id(schema, k)] for k in range(schema.num_sparse)],
        )


@dataclass
class PartitionSet:
    """Paths and row counts of every partition of one sharded dataset."""

    rows_per_partition: int
    paths: dict[int, Path] = field(default_factory=dict)
    rows: dict[int, int] = field(default_factory=dict)

    @property
    def num_partitions(self) -> int:
        return len(self.paths)

    @property
    def total_rows(self) -> int:
        return sum(self.rows.values())

    def partition_ids(self) -> list[int]:
        return sorted(self.paths)


def shard(
    table: RawTable,
    rows_per_partition: int,
    directory: str | Path,
    schema: FeatureSchema,
    encoding: str = "plain",
    name_format: str = "part-{:05d}.psf1",
) -> PartitionSet:
    """Split a table into row-disjoint partitions and persist each one.

    Produces ceil(num_rows / rows_per_partition) files; the last may be
    short; row order is preserved.
    """
    if rows_per_partition < 1:
        raise ValueError(f"rows_per_partition must be >= 1, got {rows_per_partition}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pset = PartitionSet(rows_per_partition=rows_per_partition)
    pid = 0
    for start in range(0, table.num_rows, rows_per_partition):
        stop = min(start + rows_per_partition, table.num_rows)
        path = directory / name_format.format(pid)
        write_partition(path, table.slice_rows(start, stop), schema, encoding)
        pset.paths[pid] = path
        pset.rows[pid] = stop - start
        pid += 1
    return pset


MANIFEST_VERSION = 1


def _manifest_path(partition_path: Path, manifest_path: Path) -> str:
    p = Path(partition_path).resolve()
    try:
        return str(p.relative_to(manifest_path.resolve().parent))
    except ValueError:
        return str(p)


def write_manifest(
    path: str | Path,
    pset: PartitionSet,
    schema: FeatureSchema,
    extra: dict | None = None,
) -> None:
    """Persist a dataset manifest (schema + partition list) as JSON.

    Partition paths are stored relative to the manifest's directory.
    """
    path = Path(path)
    doc = {
        "version": MANIFEST_VERSION,
        "schema": schema.to_dict(),
        "rows_per_partition": pset.rows_per_partition,
        "partitions": [
            {
                "id": pid,
                "path": _manifest_path(pset.paths[pid], path),
                "rows": pset.rows[pid],
            }
            for pid in pset.partition_ids()
        ],
        "extra": extra or {},
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path: str | Path) -> tuple[PartitionSet, FeatureSchema, dict]:
    """Load a manifest; partition paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot load manifest {path}: {exc}") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    schema = validate_config(doc["schema"])
    pset = PartitionSet(rows_per_partition=int(doc["rows_per_partition"]))
    for entry in doc["partitions"]:
        pid = int(entry["id"])
        pset.paths[pid] = path.parent / entry["path"]
        pset.rows[pid] = int(entry["rows"])
    return pset, schema, doc.get("extra", {})
