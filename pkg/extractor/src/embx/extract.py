"""Run a frozen backbone over a benchmark and emit EMBD1 train/test files."""

from __future__ import annotations

import time
from pathlib import Path

import torch

from .backbones import load_backbone
from .benchmarks import ExtractionJob, get_benchmark
from .embd1 import Embd1Writer, write_sidecar


def _batches(items, preprocess, batch_size, limit):
    tensors, labels, tasks = [], [], []
    produced = 0
    for img, label, task in items:
        tensors.append(preprocess(img))
        labels.append(label)
        tasks.append(task)
        produced += 1
        if len(tensors) == batch_size:
            yield torch.stack(tensors), labels, tasks
            tensors, labels, tasks = [], [], []
        if limit is not None and produced >= limit:
            break
    if tensors:
        yield torch.stack(tensors), labels, tasks


def extract_split(job: ExtractionJob, backbone, split: str) -> Path:
    benchmark = get_benchmark(job.benchmark)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{benchmark.name}-{split}.embd"

    start = time.perf_counter()
    with Embd1Writer(out_path, backbone.dim) as writer:
        for batch, labels, tasks in _batches(
                benchmark.items(split, Path(job.data_root)),
                backbone.preprocess, job.batch_size, job.limit):
            writer.append(labels, tasks, backbone.embed(batch))
        count = writer.count
    elapsed = time.perf_counter() - start

    write_sidecar(out_path, {
        "benchmark": benchmark.name,
        "split": split,
        "records": count,
        "dim": backbone.dim,
        "model_id": backbone.model_id,
        "checkpoint_sha256": backbone.checkpoint_hash,
        "feature_tap_point": backbone.tap_point,
        "preprocessing": backbone.preprocess_description,
        "extraction_seconds": round(elapsed, 2),
        "limit": job.limit,
    })
    return out_path


def extract(job: ExtractionJob):
    """(train path, test path); sidecars record model and preprocessing."""
    backbone = load_backbone(job.model, device=job.device)
    train = extract_split(job, backbone, "train")
    test = extract_split(job, backbone, "test")
    return train, test
