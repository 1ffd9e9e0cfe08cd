"""Seeded synthetic Gaussian embedding datasets for desk-scale experiments.

Class centers sit on a 1-D lattice along the first coordinate axis:
``center_k = (k * class_separation * noise_sigma, 0, ..., 0)`` so adjacent
centers are exactly ``class_separation`` noise standard deviations apart
and all centers are pairwise distinct whenever the separation is positive.
Samples are ``center + noise_sigma * g`` with standard normals drawn from
the portable generator in class-major, then sample, then coordinate order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .store import EmbeddingRecord


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    dim: int
    samples_per_class: int
    class_separation: float
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.num_classes <= 0:
            raise ValueError("num_classes must be positive")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.samples_per_class <= 0:
            raise ValueError("samples_per_class must be positive")
        if self.class_separation <= 0:
            raise ValueError("class_separation must be positive")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative 64-bit integer")


def class_centers(spec: SyntheticSpec) -> np.ndarray:
    """(num_classes, dim) float64 true class centers."""
    centers = np.zeros((spec.num_classes, spec.dim), dtype=np.float64)
    centers[:, 0] = np.arange(spec.num_classes) * (
        spec.class_separation * spec.noise_sigma)
    return centers


def partition_evenly(num_items: int, num_parts: int) -> list[int]:
    """Sizes of an in-order partition; the last part absorbs the remainder."""
    if num_parts <= 0:
        raise ValueError("num_parts must be positive")
    if num_parts > num_items:
        raise ValueError(f"cannot split {num_items} items into {num_parts} parts")
    base = num_items // num_parts
    sizes = [base] * num_parts
    sizes[-1] += num_items - base * num_parts
    return sizes


def default_class_to_task(num_classes: int, num_tasks: int) -> np.ndarray:
    """Even label-order partition of classes into tasks."""
    sizes = partition_evenly(num_classes, num_tasks)
    return np.repeat(np.arange(num_tasks, dtype=np.int64), sizes)


def generate_arrays(spec: SyntheticSpec, class_to_task=None,
                    num_tasks: int = 1):
    """Columnar form: (class_labels, task_ids, vectors float32 (N, dim))."""
    if class_to_task is None:
        class_to_task = default_class_to_task(spec.num_classes, num_tasks)
    class_to_task = np.asarray(class_to_task, dtype=np.int64)
    if class_to_task.shape != (spec.num_classes,):
        raise ValueError("class_to_task must map every class to a task")

    n = spec.num_classes * spec.samples_per_class
    labels = np.repeat(np.arange(spec.num_classes, dtype=np.int64),
                       spec.samples_per_class)
    noise = kernels.standard_normals(spec.seed, n * spec.dim)
    noise = noise.reshape(n, spec.dim)
    vectors = class_centers(spec)[labels] + spec.noise_sigma * noise
    return labels, class_to_task[labels], vectors.astype(np.float32)


def generate_synthetic(spec: SyntheticSpec, class_to_task=None,
                       num_tasks: int = 1) -> list[EmbeddingRecord]:
    """Deterministic record sequence for the given spec and task map."""
    labels, tasks, vectors = generate_arrays(spec, class_to_task, num_tasks)
    return [EmbeddingRecord(vector=vectors[i], class_label=int(labels[i]),
                            task_id=int(tasks[i]))
            for i in range(labels.shape[0])]
