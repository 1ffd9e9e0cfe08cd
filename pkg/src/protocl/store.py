"""EMBD1 embedding dataset files: write, read, stream, validate.

Byte layout (little-endian, no padding):

    offset 0   magic            4 bytes, ASCII "EMBD"
    offset 4   format_version   u32 (currently 1)
    offset 8   dim              u32
    offset 12  record_count     u64
    offset 20  num_classes      u32
    offset 24  num_tasks        u32
    offset 28  records          record_count entries of
                   class_label  u32
                   task_id      u32
                   vector       dim x f32 (IEEE-754)

An optional sidecar at ``<path>.meta.json`` carries human-readable names
and provenance; its absence is never an error.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAGIC = b"EMBD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQII")
HEADER_SIZE = _HEADER.size  # 28 bytes
SIDECAR_SUFFIX = ".meta.json"


class FormatError(Exception):
    """Malformed binary container."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    """File body is shorter than its header promises."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(message)
        self.byte_offset = byte_offset


class NonFiniteValueError(FormatError):
    """A vector payload contains NaN or Inf."""


@dataclass
class EmbeddingRecord:
    """One frozen feature vector with its class label and task id."""

    vector: np.ndarray
    class_label: int
    task_id: int = 0

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise ValueError("vector must be 1-d")
        if self.class_label < 0 or self.task_id < 0:
            raise ValueError("class_label and task_id must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (self.class_label == other.class_label
                and self.task_id == other.task_id
                and self.vector.tobytes() == other.vector.tobytes())


@dataclass(frozen=True)
class DatasetHeader:
    dim: int
    record_count: int
    num_classes: int
    num_tasks: int
    format_version: int = FORMAT_VERSION

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.format_version, self.dim,
                            self.record_count, self.num_classes, self.num_tasks)

    def record_nbytes(self) -> int:
        return 8 + 4 * self.dim

    def body_nbytes(self) -> int:
        return self.record_count * self.record_nbytes()


def record_dtype(dim: int) -> np.dtype:
    """Packed structured dtype matching the on-disk record layout."""
    dt = np.dtype([("class_label", "<u4"), ("task_id", "<u4"),
                   ("vector", "<f4", (dim,))])
    assert dt.itemsize == 8 + 4 * dim
    return dt


def _parse_header(raw: bytes, path) -> DatasetHeader:
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(
            f"{path}: file ends at byte {len(raw)} inside the "
            f"{HEADER_SIZE}-byte header", byte_offset=len(raw))
    magic, version, dim, count, num_classes, num_tasks = _HEADER.unpack(raw[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported format_version {version}, expected {FORMAT_VERSION}")
    return DatasetHeader(dim=dim, record_count=count,
                         num_classes=num_classes, num_tasks=num_tasks,
                         format_version=version)


def read_header(path) -> DatasetHeader:
    with open(path, "rb") as f:
        return _parse_header(f.read(HEADER_SIZE), path)


def write_arrays(class_labels, task_ids, vectors, path) -> DatasetHeader:
    """Columnar fast path behind :func:`write_dataset`."""
    labels = np.asarray(class_labels)
    tasks = np.asarray(task_ids)
    vecs = np.asarray(vectors, dtype=np.float32)
    if vecs.ndim != 2:
        raise ValueError("vectors must be a (N, dim) array")
    n, dim = vecs.shape
    if n == 0:
        raise ValueError("cannot write an empty record sequence")
    if labels.shape != (n,) or tasks.shape != (n,):
        raise ValueError("class_labels/task_ids must have one entry per vector")
    if labels.min() < 0 or tasks.min() < 0:
        raise ValueError("class_label and task_id must be non-negative")
    header = DatasetHeader(
        dim=dim,
        record_count=n,
        num_classes=int(labels.max()) + 1,
        num_tasks=int(tasks.max()) + 1,
    )
    body = np.empty(n, dtype=record_dtype(dim))
    body["class_label"] = labels
    body["task_id"] = tasks
    body["vector"] = vecs
    with open(path, "wb") as f:
        f.write(header.pack())
        body.tofile(f)
    return header


def write_dataset(records: Sequence[EmbeddingRecord], dim: int, path) -> DatasetHeader:
    """Write records to an EMBD1 file; all vectors must have length dim."""
    if len(records) == 0:
        raise ValueError("cannot write an empty record sequence")
    for i, rec in enumerate(records):
        if rec.vector.shape[0] != dim:
            raise ValueError(
                f"record {i} has dim {rec.vector.shape[0]}, expected {dim}")
    labels = np.fromiter((r.class_label for r in records), dtype=np.int64,
                         count=len(records))
    tasks = np.fromiter((r.task_id for r in records), dtype=np.int64,
                        count=len(records))
    vecs = np.stack([r.vector for r in records])
    return write_arrays(labels, tasks, vecs, path)


def _check_finite_block(block: np.ndarray, first_index: int, path) -> None:
    finite = np.isfinite(block["vector"])
    if not finite.all():
        rec, coord = np.argwhere(~finite)[0]
        raise NonFiniteValueError(
            f"{path}: non-finite vector entry at record "
            f"{first_index + int(rec)}, coordinate {int(coord)}")


def iter_records(path, chunk_size: int = 8192) -> Iterator[EmbeddingRecord]:
    """Stream records without loading the whole file."""
    header = read_header(path)
    dt = record_dtype(header.dim)
    seen = 0
    with open(path, "rb") as f:
        f.seek(HEADER_SIZE)
        while seen < header.record_count:
            want = min(chunk_size, header.record_count - seen)
            block = np.fromfile(f, dtype=dt, count=want)
            if block.shape[0] < want:
                end = HEADER_SIZE + (seen + block.shape[0]) * dt.itemsize
                raise TruncatedFileError(
                    f"{path}: expected {header.record_count} records "
                    f"({HEADER_SIZE + header.body_nbytes()} bytes) but data "
                    f"ends near byte {end}", byte_offset=end)
            _check_finite_block(block, seen, path)
            for row in block:
                yield EmbeddingRecord(vector=row["vector"].copy(),
                                      class_label=int(row["class_label"]),
                                      task_id=int(row["task_id"]))
            seen += want


def read_dataset(path) -> tuple[DatasetHeader, list[EmbeddingRecord]]:
    """Read a full EMBD1 file into memory."""
    header = read_header(path)
    return header, list(iter_records(path))


@dataclass
class Dataset:
    """Columnar, memory-mapped view of an EMBD1 file."""

    header: DatasetHeader
    class_labels: np.ndarray  # int64 (N,)
    task_ids: np.ndarray      # int64 (N,)
    vectors: np.ndarray       # float32 (N, dim), mmap-backed

    def __len__(self) -> int:
        return self.header.record_count

    @property
    def dim(self) -> int:
        return self.header.dim

    def record(self, i: int) -> EmbeddingRecord:
        return EmbeddingRecord(vector=np.array(self.vectors[i]),
                               class_label=int(self.class_labels[i]),
                               task_id=int(self.task_ids[i]))


def open_dataset(path, check_finite: bool = True) -> Dataset:
    """Open an EMBD1 file as a memory-mapped columnar dataset."""
    header = read_header(path)
    dt = record_dtype(header.dim)
    actual = os.path.getsize(path) - HEADER_SIZE
    if actual < header.body_nbytes():
        raise TruncatedFileError(
            f"{path}: header promises {header.body_nbytes()} body bytes, "
            f"file ends at byte {HEADER_SIZE + actual}",
            byte_offset=HEADER_SIZE + actual)
    mm = np.memmap(path, dtype=dt, mode="r", offset=HEADER_SIZE,
                   shape=(header.record_count,))
    if check_finite and header.record_count:
        _check_finite_block(mm, 0, path)
    return Dataset(header=header,
                   class_labels=mm["class_label"].astype(np.int64),
                   task_ids=mm["task_id"].astype(np.int64),
                   vectors=mm["vector"])


# --- validation ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    record_index: int | None = None
    coordinate: int | None = None


@dataclass
class ValidationReport:
    path: str
    violations: list[Violation] = field(default_factory=list)
    truncated_listing: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [v.message for v in self.violations]
        if self.truncated_listing:
            out.append("... further violations suppressed")
        return out


def validate_dataset(path, max_violations: int = 1000) -> ValidationReport:
    """Check header and record invariants; violations are report entries.

    Only I/O failures raise; a malformed file yields a non-empty report.
    """
    report = ValidationReport(path=str(path))

    def add(kind, message, record_index=None, coordinate=None) -> bool:
        if len(report.violations) >= max_violations:
            report.truncated_listing = True
            return False
        report.violations.append(Violation(kind, message, record_index, coordinate))
        return True

    size = os.path.getsize(path)
    with open(path, "rb") as f:
        raw = f.read(HEADER_SIZE)
        try:
            header = _parse_header(raw, path)
        except BadMagicError as exc:
            add("bad_magic", str(exc))
            return report
        except UnsupportedVersionError as exc:
            add("unsupported_version", str(exc))
            return report
        except TruncatedFileError as exc:
            add("truncated", str(exc))
            return report

        expected = header.body_nbytes()
        actual = size - HEADER_SIZE
        if actual != expected:
            add("record_count_mismatch",
                f"{path}: header promises {header.record_count} records "
                f"({expected} body bytes) but body has {actual} bytes")
            if actual < expected:
                return report

        dt = record_dtype(header.dim)
        seen = 0
        while seen < header.record_count:
            block = np.fromfile(f, dtype=dt,
                                count=min(8192, header.record_count - seen))
            if block.shape[0] == 0:
                break
            bad_label = np.nonzero(block["class_label"] >= header.num_classes)[0]
            for i in bad_label:
                if not add("label_out_of_range",
                           f"{path}: record {seen + int(i)} has class_label "
                           f"{int(block['class_label'][i])} >= num_classes "
                           f"{header.num_classes}", record_index=seen + int(i)):
                    return report
            bad_task = np.nonzero(block["task_id"] >= header.num_tasks)[0]
            for i in bad_task:
                if not add("task_out_of_range",
                           f"{path}: record {seen + int(i)} has task_id "
                           f"{int(block['task_id'][i])} >= num_tasks "
                           f"{header.num_tasks}", record_index=seen + int(i)):
                    return report
            finite = np.isfinite(block["vector"])
            if not finite.all():
                for rec, coord in np.argwhere(~finite):
                    if not add("non_finite",
                               f"{path}: non-finite entry at record "
                               f"{seen + int(rec)}, coordinate {int(coord)}",
                               record_index=seen + int(rec),
                               coordinate=int(coord)):
                        return report
            seen += block.shape[0]
    return report


# --- sidecar ----------------------------------------------------------------

def sidecar_path(path) -> Path:
    return Path(str(path) + SIDECAR_SUFFIX)


def write_sidecar(path, metadata: dict) -> Path:
    side = sidecar_path(path)
    side.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return side


def read_sidecar(path) -> dict | None:
    """Sidecar metadata, or None when absent (never an error)."""
    side = sidecar_path(path)
    if not side.exists():
        return None
    return json.loads(side.read_text())
