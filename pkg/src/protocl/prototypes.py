"""Per-class running-mean prototypes: the learner's entire state.

A table holds one count and one float64 mean vector per class seen so far,
nothing else, so its size is O(num_classes * dim) regardless of stream
length. Single observations apply the incremental recurrence
``mean += (x - mean) / count``; bulk ingestion routes the same arithmetic
through the fold kernel. ``batch_mean`` is the literal two-pass form kept
as an independent route for cross-checking.

PROT1 state files (little-endian, no padding):

    magic "PROT" | version u32 | dim u32 | num_prototypes u32
    then per prototype, sorted by class label:
        class_label u32 | count u64 | mean dim x f64
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .store import (BadMagicError, EmbeddingRecord, FormatError,
                    TruncatedFileError, UnsupportedVersionError)

PROT_MAGIC = b"PROT"
PROT_VERSION = 1
_PROT_HEADER = struct.Struct("<4sIII")
_PROTO_PREFIX = struct.Struct("<IQ")


@dataclass
class ClassPrototype:
    class_label: int
    count: int
    mean: np.ndarray  # float64 (dim,)


class PrototypeTable:
    """Mapping class label -> (count, running mean), all sharing one dim."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._counts: dict[int, int] = {}
        self._means: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, class_label: int) -> bool:
        return class_label in self._counts

    def get(self, class_label: int) -> ClassPrototype:
        if class_label not in self._counts:
            raise KeyError(f"no prototype for class {class_label}")
        return ClassPrototype(class_label=class_label,
                              count=self._counts[class_label],
                              mean=self._means[class_label])

    def prototypes(self) -> list[ClassPrototype]:
        return [self.get(label) for label in sorted(self._counts)]

    def class_labels(self) -> np.ndarray:
        return np.array(sorted(self._counts), dtype=np.int64)

    def counts_array(self) -> np.ndarray:
        return np.array([self._counts[c] for c in sorted(self._counts)],
                        dtype=np.int64)

    def means_matrix(self) -> np.ndarray:
        """(num_classes, dim) float64, rows sorted by class label."""
        if not self._counts:
            return np.empty((0, self.dim), dtype=np.float64)
        return np.stack([self._means[c] for c in sorted(self._counts)])

    def copy(self) -> "PrototypeTable":
        out = PrototypeTable(self.dim)
        out._counts = dict(self._counts)
        out._means = {c: m.copy() for c, m in self._means.items()}
        return out

    def state_size_bytes(self) -> int:
        """Bytes of retained learner state (means + counts + labels)."""
        return sum(m.nbytes for m in self._means.values()) + 16 * len(self._counts)

    def _check_vector(self, vector: np.ndarray) -> np.ndarray:
        if vector.ndim != 1 or vector.shape[0] != self.dim:
            raise ValueError(
                f"vector has shape {vector.shape}, expected ({self.dim},)")
        if not np.isfinite(vector).all():
            raise ValueError("vector contains non-finite entries")
        return np.asarray(vector, dtype=np.float64)

    def observe(self, record: EmbeddingRecord) -> "PrototypeTable":
        """Fold one record into its class mean; inserts on first sight."""
        vector = self._check_vector(np.asarray(record.vector))
        label = record.class_label
        if label in self._counts:
            self._counts[label] += 1
            mean = self._means[label]
            mean += (vector - mean) / self._counts[label]
        else:
            self._counts[label] = 1
            self._means[label] = vector.copy()
        return self

    def observe_stream(self, class_labels, vectors) -> "PrototypeTable":
        """Fold many records in order via the kernel; same arithmetic as observe.

        float32 payloads stay float32 (the kernel widens each entry exactly),
        avoiding a doubled copy of large streams.
        """
        labels = np.ascontiguousarray(class_labels, dtype=np.int64)
        vecs = np.asarray(vectors)
        if vecs.dtype != np.float32:
            vecs = np.ascontiguousarray(vecs, dtype=np.float64)
        else:
            vecs = np.ascontiguousarray(vecs)
        if vecs.ndim != 2 or vecs.shape[1] != self.dim:
            raise ValueError(
                f"vectors have shape {vecs.shape}, expected (N, {self.dim})")
        if labels.shape != (vecs.shape[0],):
            raise ValueError("one class label per vector required")
        if labels.size == 0:
            return self
        if labels.min() < 0:
            raise ValueError("class labels must be non-negative")
        if not np.isfinite(vecs).all():
            raise ValueError("vectors contain non-finite entries")

        uniq, rows = np.unique(labels, return_inverse=True)
        counts = np.array([self._counts.get(int(c), 0) for c in uniq],
                          dtype=np.int64)
        means = np.zeros((uniq.shape[0], self.dim), dtype=np.float64)
        for i, c in enumerate(uniq):
            if int(c) in self._means:
                means[i] = self._means[int(c)]
        kernels.fold_mean(rows.astype(np.int64), vecs, counts, means)
        for i, c in enumerate(uniq):
            self._counts[int(c)] = int(counts[i])
            self._means[int(c)] = means[i].copy()
        return self


def batch_mean(records: Iterable[EmbeddingRecord] | Sequence[EmbeddingRecord],
               dim: int) -> PrototypeTable:
    """Two-pass per-class mean: sum everything, divide once.

    Independent of the streaming recurrence; empty input yields an empty
    table.
    """
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for i, rec in enumerate(records):
        v = np.asarray(rec.vector)
        if v.shape[0] != dim:
            raise ValueError(f"record {i} has dim {v.shape[0]}, expected {dim}")
        label = rec.class_label
        if label in sums:
            sums[label] += v.astype(np.float64)
            counts[label] += 1
        else:
            sums[label] = v.astype(np.float64)
            counts[label] = 1
    table = PrototypeTable(dim)
    for label in sums:
        table._counts[label] = counts[label]
        table._means[label] = sums[label] / counts[label]
    return table


def batch_mean_arrays(class_labels, vectors, dim: int) -> PrototypeTable:
    """Columnar two-pass mean: per-class float64 sum, one division.

    Classes are gathered through one stable argsort so each per-class chunk
    is materialized once, keeping peak memory at the largest class.
    """
    labels = np.asarray(class_labels, dtype=np.int64)
    vecs = np.asarray(vectors)
    if vecs.ndim != 2 or vecs.shape[1] != dim:
        raise ValueError(f"vectors have shape {vecs.shape}, expected (N, {dim})")
    table = PrototypeTable(dim)
    if labels.size == 0:
        return table
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    uniq, starts = np.unique(sorted_labels, return_index=True)
    bounds = np.append(starts, labels.size)
    for i, label in enumerate(uniq):
        idx = order[starts[i]:bounds[i + 1]]
        chunk = vecs[idx].astype(np.float64, copy=False)
        table._counts[int(label)] = idx.size
        table._means[int(label)] = chunk.sum(axis=0) / idx.size
    return table


def merge(a: PrototypeTable, b: PrototypeTable) -> PrototypeTable:
    """Combine two tables: count-weighted means, disjoint classes copied."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    out = PrototypeTable(a.dim)
    for label in set(a._counts) | set(b._counts):
        in_a, in_b = label in a._counts, label in b._counts
        if in_a and in_b:
            na, nb = a._counts[label], b._counts[label]
            out._counts[label] = na + nb
            out._means[label] = (na * a._means[label] + nb * b._means[label]) / (na + nb)
        elif in_a:
            out._counts[label] = a._counts[label]
            out._means[label] = a._means[label].copy()
        else:
            out._counts[label] = b._counts[label]
            out._means[label] = b._means[label].copy()
    return out


def save_table(table: PrototypeTable, path) -> None:
    """Write PROT1 state; means keep full float64 precision."""
    with open(path, "wb") as f:
        f.write(_PROT_HEADER.pack(PROT_MAGIC, PROT_VERSION, table.dim, len(table)))
        for proto in table.prototypes():
            f.write(_PROTO_PREFIX.pack(proto.class_label, proto.count))
            f.write(np.ascontiguousarray(proto.mean, dtype="<f8").tobytes())


def load_table(path) -> PrototypeTable:
    """Read PROT1 state written by :func:`save_table`; bit-exact round trip."""
    with open(path, "rb") as f:
        raw = f.read(_PROT_HEADER.size)
        if len(raw) < _PROT_HEADER.size:
            raise TruncatedFileError(
                f"{path}: file ends at byte {len(raw)} inside the header",
                byte_offset=len(raw))
        magic, version, dim, num = _PROT_HEADER.unpack(raw)
        if magic != PROT_MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}, expected {PROT_MAGIC!r}")
        if version != PROT_VERSION:
            raise UnsupportedVersionError(
                f"{path}: unsupported version {version}, expected {PROT_VERSION}")
        if dim <= 0:
            raise FormatError(f"{path}: invalid dim {dim}")
        table = PrototypeTable(dim)
        entry = _PROTO_PREFIX.size + 8 * dim
        for i in range(num):
            chunk = f.read(entry)
            if len(chunk) < entry:
                offset = _PROT_HEADER.size + i * entry + len(chunk)
                raise TruncatedFileError(
                    f"{path}: prototype {i} truncated, file ends at byte {offset}",
                    byte_offset=offset)
            label, count = _PROTO_PREFIX.unpack_from(chunk)
            mean = np.frombuffer(chunk, dtype="<f8", count=dim,
                                 offset=_PROTO_PREFIX.size).copy()
            table._counts[label] = count
            table._means[label] = mean
    return table
