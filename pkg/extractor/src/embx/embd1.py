"""EMBD1 embedding files, written from the published byte layout.

The consumer side of these files lives in a separate package; this module
implements the wire format independently so the two only meet at the
bytes:

    magic "EMBD" | format_version u32=1 | dim u32 | record_count u64
    | num_classes u32 | num_tasks u32
    then per record: class_label u32 | task_id u32 | dim x float32

all little-endian, no padding. A JSON sidecar sits at ``<path>.meta.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMBD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQII")
HEADER_SIZE = _HEADER.size


class Embd1Writer:
    """Streamed writer; the header is back-patched on close."""

    def __init__(self, path, dim: int):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.path = Path(path)
        self.dim = dim
        self.count = 0
        self.max_label = -1
        self.max_task = -1
        self._file = open(self.path, "wb")
        self._file.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, 0, 0, 0))

    def append(self, class_labels, task_ids, vectors) -> None:
        labels = np.ascontiguousarray(class_labels, dtype="<u4")
        tasks = np.ascontiguousarray(task_ids, dtype="<u4")
        vecs = np.ascontiguousarray(vectors, dtype="<f4")
        if vecs.ndim != 2 or vecs.shape[1] != self.dim:
            raise ValueError(f"vectors must be (N, {self.dim})")
        n = vecs.shape[0]
        if labels.shape != (n,) or tasks.shape != (n,):
            raise ValueError("labels/tasks must match the batch size")
        block = np.empty(n, dtype=np.dtype([("label", "<u4"), ("task", "<u4"),
                                            ("vector", "<f4", (self.dim,))]))
        block["label"] = labels
        block["task"] = tasks
        block["vector"] = vecs
        block.tofile(self._file)
        self.count += n
        if n:
            self.max_label = max(self.max_label, int(labels.max()))
            self.max_task = max(self.max_task, int(tasks.max()))

    def close(self) -> None:
        if self._file.closed:
            return
        self._file.flush()
        self._file.seek(0)
        self._file.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.dim,
                                      self.count, self.max_label + 1,
                                      self.max_task + 1))
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_embd1(path):
    """(header dict, labels, task_ids, vectors) for verification purposes."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: shorter than the {HEADER_SIZE}-byte header")
    magic, version, dim, count, num_classes, num_tasks = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dt = np.dtype([("label", "<u4"), ("task", "<u4"), ("vector", "<f4", (dim,))])
    body = np.frombuffer(raw, dtype=dt, count=count, offset=HEADER_SIZE)
    header = {"dim": dim, "record_count": count,
              "num_classes": num_classes, "num_tasks": num_tasks}
    return (header, body["label"].astype(np.int64),
            body["task"].astype(np.int64), body["vector"])


def write_sidecar(path, metadata: dict) -> Path:
    side = Path(str(path) + ".meta.json")
    side.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return side


def read_sidecar(path) -> dict | None:
    side = Path(str(path) + ".meta.json")
    if not side.exists():
        return None
    return json.loads(side.read_text())
