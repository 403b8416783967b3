import json
import struct

import numpy as np
import pytest

from recprep.columnar import (
    ColumnKind,
    Encoding,
    PartitionReader,
    choose_encoding,
    decode_chunk,
    encode_chunk,
    encode_partition,
    load_manifest,
    shard,
    write_manifest,
    write_partition,
)
from recprep.datagen import GenSpec, generate
from recprep.errors import FormatError, UnknownFeatureError
from recprep.schema import FeatureSchema, preset, validate_config
from recprep.tables import RawTable, SparseColumn, concat_tables, sparse_from_rows, tables_equal


def small_schema(num_dense=2, num_sparse=1) -> FeatureSchema:
    return FeatureSchema(
        num_dense=num_dense,
        num_sparse=num_sparse,
        avg_sparse_len=3.0,
        num_generated_sparse=min(1, num_dense),
        bucket_size=8,
        max_embedding_index=100,
    )


@pytest.mark.parametrize("name", ["RM1", "RM2", "RM3", "RM4", "RM5"])
@pytest.mark.parametrize("encoding", ["plain", "dictionary", "auto"])
def test_partition_roundtrip(tmp_path, name, encoding):
    schema = preset(name).schema
    table = generate(schema, GenSpec(num_rows=64, rng_seed=13))
    path = tmp_path / "p.psf1"
    write_partition(path, table, schema, encoding)
    with PartitionReader(path, schema) as reader:
        assert reader.row_count == 64
        back = reader.read_table(schema)
    assert tables_equal(table, back)


def test_empty_sparse_lists_roundtrip(tmp_path):
    schema = small_schema()
    table = RawTable(
        num_rows=4,
        dense=[np.zeros(4, dtype=np.float32), np.ones(4, dtype=np.float32)],
        sparse=[sparse_from_rows([[], [], [], []])],
    )
    path = tmp_path / "empty.psf1"
    write_partition(path, table, schema)
    with PartitionReader(path, schema) as reader:
        back = reader.read_table(schema)
    assert np.all(back.sparse[0].offsets == 0)
    assert len(back.sparse[0].values) == 0
    assert tables_equal(table, back)


def test_shard_counts_and_order(tmp_path):
    schema = preset("RM1").schema
    table = generate(schema, GenSpec(num_rows=16_384, rng_seed=2))
    pset = shard(table, 8192, tmp_path / "a", schema)
    assert pset.num_partitions == 2
    assert pset.rows == {0: 8192, 1: 8192}

    short = shard(table.slice_rows(0, 10), 8192, tmp_path / "b", schema)
    assert short.num_partitions == 1
    assert short.rows == {0: 10}

    tiny = shard(table.slice_rows(0, 3), 1, tmp_path / "c", schema)
    assert tiny.num_partitions == 3
    parts = []
    for pid in tiny.partition_ids():
        with PartitionReader(tiny.paths[pid], schema) as r:
            parts.append(r.read_table(schema))
    assert tables_equal(concat_tables(parts), table.slice_rows(0, 3))


def test_shard_concat_reconstructs_table(tmp_path):
    schema = small_schema()
    table = generate(schema, GenSpec(num_rows=1000, rng_seed=3))
    pset = shard(table, 192, tmp_path, schema)
    assert pset.num_partitions == 6  # ceil(1000/192)
    parts = []
    for pid in pset.partition_ids():
        with PartitionReader(pset.paths[pid], schema) as r:
            parts.append(r.read_table(schema))
    assert tables_equal(concat_tables(parts), table)


def test_dictionary_beats_plain_on_low_cardinality():
    rng = np.random.Generator(np.random.PCG64(4))
    col = rng.choice(np.linspace(1, 10, 10), size=1000).astype(np.float32)
    plain = encode_chunk(col, ColumnKind.DENSE, Encoding.PLAIN)
    dictionary = encode_chunk(col, ColumnKind.DENSE, Encoding.DICTIONARY)
    assert len(dictionary) < len(plain)
    assert choose_encoding(col, ColumnKind.DENSE) == Encoding.DICTIONARY
    # and the inverse on high-cardinality data
    unique = np.arange(1000, dtype=np.float32)
    assert choose_encoding(unique, ColumnKind.DENSE) == Encoding.PLAIN


def test_decode_plain_dense_passthrough():
    payload = np.array([1.0, 2.5], dtype="<f4").tobytes()
    out = decode_chunk(payload, ColumnKind.DENSE, Encoding.PLAIN, 2)
    np.testing.assert_array_equal(out, np.array([1.0, 2.5], dtype=np.float32))


def test_decode_dictionary_by_definition():
    # dict [7.0, 9.0], indices [1, 0, 1] -> [9.0, 7.0, 9.0]
    payload = (
        struct.pack("<I", 2)
        + np.array([7.0, 9.0], dtype="<f4").tobytes()
        + bytes([1, 0, 1])
    )
    out = decode_chunk(payload, ColumnKind.DENSE, Encoding.DICTIONARY, 3)
    np.testing.assert_array_equal(out, np.array([9.0, 7.0, 9.0], dtype=np.float32))


def test_decode_sparse_dictionary_values():
    offsets = np.array([0, 1, 3], dtype="<u8").tobytes()
    payload = (
        offsets
        + struct.pack("<I", 2)
        + np.array([7, 9], dtype="<u8").tobytes()
        + bytes([1, 0, 1])
    )
    out = decode_chunk(payload, ColumnKind.SPARSE, Encoding.DICTIONARY, 2)
    assert list(out.values) == [9, 7, 9]
    assert list(out.offsets) == [0, 1, 3]


def test_dictionary_roundtrip_preserves_bit_patterns():
    col = np.array([0.0, -0.0, 1.5, -0.0, np.nan], dtype=np.float32)
    payload = encode_chunk(col, ColumnKind.DENSE, Encoding.DICTIONARY)
    out = decode_chunk(payload, ColumnKind.DENSE, Encoding.DICTIONARY, 5)
    np.testing.assert_array_equal(out.view(np.uint32), col.view(np.uint32))


def test_decode_rejects_truncation_and_bad_indices():
    with pytest.raises(FormatError, match="dense plain chunk"):
        decode_chunk(b"\x00" * 7, ColumnKind.DENSE, Encoding.PLAIN, 2)
    with pytest.raises(FormatError, match="truncated"):
        decode_chunk(b"\x00\x00", ColumnKind.DENSE, Encoding.DICTIONARY, 1)
    # dictionary with an out-of-range index: dict_len=1, index=1
    payload = struct.pack("<I", 1) + np.array([3.0], dtype="<f4").tobytes() + bytes([1])
    with pytest.raises(FormatError, match="out of range"):
        decode_chunk(payload, ColumnKind.DENSE, Encoding.DICTIONARY, 1)
    with pytest.raises(FormatError, match="offsets"):
        bad_offsets = np.array([0, 5, 2], dtype="<u8").tobytes()
        decode_chunk(bad_offsets, ColumnKind.SPARSE, Encoding.PLAIN, 2)


def test_selective_read_byte_bound(tmp_path):
    # 39 equal-size dense columns; reading 2 must touch ~2/39 of the file
    schema = FeatureSchema(
        num_dense=39, num_sparse=0, avg_sparse_len=1.0,
        num_generated_sparse=0, bucket_size=4, max_embedding_index=10,
    )
    table = generate(schema, GenSpec(num_rows=4096, rng_seed=5))
    path = tmp_path / "wide.psf1"
    write_partition(path, table, schema)
    with PartitionReader(path, schema) as reader:
        file_size = reader.file_size
        footer_overhead = reader.stats.footer_bytes
        cols = reader.read_columns([3, 17])
        assert set(cols) == {3, 17}
        chunk_bytes = reader.stats.chunk_bytes
        total = reader.stats.bytes_read
    assert chunk_bytes == 2 * 4096 * 4
    assert total <= (2 / 39) * file_size + footer_overhead + 0.05 * file_size
    # the strong form: nothing beyond the requested chunks and the footer
    assert total == chunk_bytes + footer_overhead


def test_read_all_columns_equals_table(tmp_path):
    schema = small_schema()
    table = generate(schema, GenSpec(num_rows=100, rng_seed=6))
    path = tmp_path / "all.psf1"
    write_partition(path, table, schema)
    with PartitionReader(path, schema) as reader:
        back = reader.read_table(schema)
    assert tables_equal(table, back)


def test_unknown_feature_id(tmp_path):
    schema = preset("RM1").schema
    table = generate(schema, GenSpec(num_rows=8, rng_seed=7))
    path = tmp_path / "rm1.psf1"
    write_partition(path, table, schema)
    with PartitionReader(path, schema) as reader:
        with pytest.raises(UnknownFeatureError):
            reader.read_columns([999])


def test_reader_times_read_and_decode(tmp_path):
    from recprep.timings import StageTimings

    schema = small_schema()
    table = generate(schema, GenSpec(num_rows=2048, rng_seed=8))
    path = tmp_path / "t.psf1"
    write_partition(path, table, schema)
    t = StageTimings()
    with PartitionReader(path, schema) as reader:
        reader.read_table(schema, timings=t)
    assert t.extract_read > 0
    assert t.extract_decode > 0
    assert t.bucketize == 0


class TestCorruption:
    @pytest.fixture()
    def file_bytes(self):
        schema = small_schema()
        table = generate(schema, GenSpec(num_rows=8, rng_seed=9))
        return schema, encode_partition(table, schema)

    def _try_read(self, tmp_path, schema, data, tag):
        path = tmp_path / f"c{tag}.psf1"
        path.write_bytes(data)
        with PartitionReader(path, schema) as reader:
            reader.read_table(schema)

    def test_every_footer_byte_flip_is_rejected(self, tmp_path, file_bytes):
        schema, good = file_bytes
        footer_len = struct.unpack("<I", good[-8:-4])[0]
        footer_start = len(good) - 8 - footer_len
        # also cover the leading magic
        positions = list(range(0, 4)) + list(range(footer_start, len(good)))
        rejected = 0
        for pos in positions:
            for flip in (0xFF, 0x01):
                data = bytearray(good)
                data[pos] ^= flip
                with pytest.raises(FormatError):
                    self._try_read(tmp_path, schema, bytes(data), f"{pos}_{flip}")
                rejected += 1
        assert rejected == 2 * len(positions)

    def test_truncated_file_rejected(self, tmp_path, file_bytes):
        schema, good = file_bytes
        for cut in (1, 7, len(good) // 2, len(good) - 1):
            with pytest.raises(FormatError):
                self._try_read(tmp_path, schema, good[:cut], f"t{cut}")

    def test_schema_mismatch_rejected(self, tmp_path, file_bytes):
        schema, good = file_bytes
        other = small_schema(num_dense=3, num_sparse=0)
        path = tmp_path / "m.psf1"
        path.write_bytes(good)
        with pytest.raises(FormatError, match="schema"):
            PartitionReader(path, other)


def test_fuzz_encode_decode_identity():
    rng = np.random.Generator(np.random.PCG64(10))
    cases = 0
    while cases < 10_000:
        n = int(rng.integers(0, 40))
        if rng.random() < 0.5:
            # dense, mixed magnitudes and signs
            col = (rng.normal(0, 1e4, n)).astype(np.float32)
            enc = Encoding.DICTIONARY if rng.random() < 0.5 else Encoding.PLAIN
            payload = encode_chunk(col, ColumnKind.DENSE, enc)
            out = decode_chunk(payload, ColumnKind.DENSE, enc, n)
            assert np.array_equal(out.view(np.uint32), col.view(np.uint32))
        else:
            lengths = rng.integers(0, 6, size=n)
            rows = [list(rng.integers(0, 1 << 63, size=int(k), dtype=np.uint64)) for k in lengths]
            col = sparse_from_rows(rows) if n else SparseColumn(
                offsets=np.zeros(1, dtype=np.uint64), values=np.empty(0, dtype=np.uint64)
            )
            enc = Encoding.DICTIONARY if rng.random() < 0.5 else Encoding.PLAIN
            payload = encode_chunk(col, ColumnKind.SPARSE, enc)
            out = decode_chunk(payload, ColumnKind.SPARSE, enc, n)
            assert np.array_equal(out.offsets, col.offsets)
            assert np.array_equal(out.values, col.values)
        cases += 1


def test_manifest_roundtrip(tmp_path):
    schema = preset("RM1").schema
    table = generate(schema, GenSpec(num_rows=40, rng_seed=11))
    pset = shard(table, 16, tmp_path, schema)
    mpath = tmp_path / "manifest.json"
    write_manifest(mpath, pset, schema, extra={"seed": 11})
    loaded, loaded_schema, extra = load_manifest(mpath)
    assert loaded_schema == schema
    assert extra == {"seed": 11}
    assert loaded.rows_per_partition == 16
    assert loaded.partition_ids() == pset.partition_ids()
    assert loaded.total_rows == 40
    for pid in loaded.partition_ids():
        assert loaded.paths[pid].exists()


def test_manifest_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        load_manifest(p)
    p.write_text(json.dumps({"version": 99}))
    with pytest.raises(FormatError, match="version"):
        load_manifest(p)


def test_validate_config_integrates_with_manifest(tmp_path):
    doc = preset("RM3").schema.to_dict()
    assert validate_config(doc) == preset("RM3").schema
