"""EMBD1 format: round-trips, streaming, corruption fixtures, validation."""

import struct

import numpy as np
import pytest

from protocl.store import (HEADER_SIZE, BadMagicError, EmbeddingRecord,
                           NonFiniteValueError, TruncatedFileError,
                           UnsupportedVersionError, iter_records,
                           open_dataset, read_dataset, read_sidecar,
                           record_dtype, validate_dataset, write_arrays,
                           write_dataset, write_sidecar)


def random_records(rng, n, dim):
    vecs = rng.normal(size=(n, dim)).astype(np.float32)
    labels = rng.integers(0, max(2, n // 4), size=n)
    tasks = rng.integers(0, 3, size=n)
    return [EmbeddingRecord(vector=vecs[i], class_label=int(labels[i]),
                            task_id=int(tasks[i])) for i in range(n)]


def test_header_counts(tmp_path):
    records = [EmbeddingRecord(np.arange(4, dtype=np.float32) + i, i) for i in range(3)]
    header = write_dataset(records, 4, tmp_path / "a.embd")
    assert header.dim == 4
    assert header.record_count == 3
    assert header.num_classes == 3
    assert header.num_tasks == 1


def test_round_trip_bytes_exact(tmp_path):
    # oracle: compare raw little-endian f32 payloads, not float values
    rng = np.random.default_rng(7)
    records = random_records(rng, 1000, 12)
    path = tmp_path / "rt.embd"
    header = write_dataset(records, 12, path)
    back_header, back = read_dataset(path)
    assert back_header == header
    assert len(back) == 1000
    for a, b in zip(records, back):
        assert a.vector.tobytes() == b.vector.tobytes()
        assert (a.class_label, a.task_id) == (b.class_label, b.task_id)


def test_mixed_dims_rejected(tmp_path):
    records = [EmbeddingRecord(np.zeros(4, np.float32), 0),
               EmbeddingRecord(np.zeros(5, np.float32), 1)]
    with pytest.raises(ValueError, match="dim"):
        write_dataset(records, 4, tmp_path / "bad.embd")


def test_empty_sequence_rejected(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        write_dataset([], 4, tmp_path / "empty.embd")


def test_streaming_equals_full_read(tmp_path):
    rng = np.random.default_rng(3)
    records = random_records(rng, 257, 9)
    path = tmp_path / "s.embd"
    write_dataset(records, 9, path)
    _, full = read_dataset(path)
    streamed = list(iter_records(path, chunk_size=16))
    assert streamed == full


def test_truncated_file_names_offset(tmp_path):
    rng = np.random.default_rng(5)
    records = random_records(rng, 20, 6)
    path = tmp_path / "t.embd"
    write_dataset(records, 6, path)
    raw = path.read_bytes()
    cut = HEADER_SIZE + 10 * record_dtype(6).itemsize + 5  # mid-record 10
    (tmp_path / "cut.embd").write_bytes(raw[:cut])
    with pytest.raises(TruncatedFileError) as err:
        read_dataset(tmp_path / "cut.embd")
    assert err.value.byte_offset <= cut
    assert str(err.value.byte_offset) in str(err.value)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.embd"
    write_dataset([EmbeddingRecord(np.zeros(2, np.float32), 0)], 2, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_dataset(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "v.embd"
    write_dataset([EmbeddingRecord(np.zeros(2, np.float32), 0)], 2, path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        read_dataset(path)


def _inject_nan(path, record_index, coordinate, dim):
    raw = bytearray(path.read_bytes())
    offset = (HEADER_SIZE + record_index * record_dtype(dim).itemsize
              + 8 + 4 * coordinate)
    raw[offset:offset + 4] = struct.pack("<f", float("nan"))
    path.write_bytes(bytes(raw))


def test_non_finite_read_error(tmp_path):
    rng = np.random.default_rng(11)
    path = tmp_path / "n.embd"
    write_dataset(random_records(rng, 10, 4), 4, path)
    _inject_nan(path, 7, 2, 4)
    with pytest.raises(NonFiniteValueError, match="record 7, coordinate 2"):
        read_dataset(path)


def test_validate_ok(tmp_path):
    rng = np.random.default_rng(13)
    path = tmp_path / "ok.embd"
    write_dataset(random_records(rng, 50, 5), 5, path)
    report = validate_dataset(path)
    assert report.ok
    assert report.violations == []


def test_validate_nan_reports_index_and_coordinate(tmp_path):
    rng = np.random.default_rng(17)
    path = tmp_path / "nan.embd"
    write_dataset(random_records(rng, 30, 8), 8, path)
    _inject_nan(path, 12, 5, 8)
    report = validate_dataset(path)
    assert not report.ok
    [v] = report.violations
    assert v.kind == "non_finite"
    assert v.record_index == 12
    assert v.coordinate == 5


def test_validate_label_out_of_range(tmp_path):
    rng = np.random.default_rng(19)
    path = tmp_path / "lbl.embd"
    write_dataset(random_records(rng, 30, 4), 4, path)
    raw = bytearray(path.read_bytes())
    offset = HEADER_SIZE + 3 * record_dtype(4).itemsize
    raw[offset:offset + 4] = struct.pack("<I", 10_000)
    path.write_bytes(bytes(raw))
    report = validate_dataset(path)
    assert [v.kind for v in report.violations] == ["label_out_of_range"]
    assert report.violations[0].record_index == 3


def test_validate_bad_magic_is_report_entry(tmp_path):
    path = tmp_path / "bm.embd"
    write_dataset([EmbeddingRecord(np.zeros(2, np.float32), 0)], 2, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    report = validate_dataset(path)
    assert [v.kind for v in report.violations] == ["bad_magic"]


def test_validate_body_size_mismatch(tmp_path):
    rng = np.random.default_rng(23)
    path = tmp_path / "short.embd"
    write_dataset(random_records(rng, 8, 4), 4, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-6])
    report = validate_dataset(path)
    assert report.violations[0].kind == "record_count_mismatch"


def test_open_dataset_columnar_matches_records(tmp_path):
    rng = np.random.default_rng(29)
    records = random_records(rng, 64, 7)
    path = tmp_path / "col.embd"
    write_dataset(records, 7, path)
    ds = open_dataset(path)
    assert len(ds) == 64
    for i in (0, 17, 63):
        assert ds.record(i) == records[i]
    assert ds.vectors.dtype == np.float32


def test_write_arrays_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    vecs = rng.normal(size=(40, 6)).astype(np.float32)
    labels = rng.integers(0, 4, size=40)
    tasks = rng.integers(0, 2, size=40)
    path = tmp_path / "arr.embd"
    header = write_arrays(labels, tasks, vecs, path)
    ds = open_dataset(path)
    assert header == ds.header
    assert np.array_equal(ds.class_labels, labels)
    assert np.array_equal(ds.task_ids, tasks)
    assert ds.vectors.tobytes() == vecs.tobytes()


def test_sidecar_round_trip_and_absence(tmp_path):
    path = tmp_path / "x.embd"
    write_dataset([EmbeddingRecord(np.zeros(2, np.float32), 0)], 2, path)
    assert read_sidecar(path) is None  # absence is never an error
    write_sidecar(path, {"names": ["cat", "dog"]})
    assert read_sidecar(path) == {"names": ["cat", "dog"]}
