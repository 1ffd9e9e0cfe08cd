"""Continual-learning scenario runner and its metrics.

A scenario is an ordered list of tasks, each a disjoint class set
(class-incremental) or a domain tag (domain-incremental). Training is
strictly sequential over tasks; after each task the frozen learner state
is evaluated single-head over all classes seen so far, filling one row of
the accuracy matrix. Average accuracy is the unweighted mean of the final
row; forgetting is the mean over earlier evaluation sets of the gap
between their best-ever accuracy and their final accuracy (raw
differences, no clamping).

Between tasks the harness audits that the learner retains no more than
O(num_classes * dim) bytes of state, which is the whole point of keeping
class means only.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .classifier import (DistanceMetric, LinearProbe, ProbeConfig,
                         predict_labels, predict_linear_batch,
                         train_linear_probe, zero_probe)
from .prototypes import PrototypeTable
from .rng import Xoshiro256StarStar
from .store import Dataset, DatasetHeader
from .synth import partition_evenly

CSV_HEADER = "after_task,eval_set,accuracy,count"

MODE_CLASS_INCREMENTAL = "class_incremental"
MODE_DOMAIN_INCREMENTAL = "domain_incremental"

LEARNER_NMC = "nmc"
LEARNER_LINEAR_PROBE = "linear_probe"


@dataclass(frozen=True)
class SplitSpec:
    mode: str
    tasks: tuple  # class-incremental: tuple of tuples of labels; domain: tuple of domain ids
    eval_sets: tuple  # class-incremental: per-task label tuples; domain: one tuple of domain ids
    seed: int | None = None

    def __post_init__(self):
        if self.mode == MODE_CLASS_INCREMENTAL:
            seen: set[int] = set()
            for task in self.tasks:
                labels = set(task)
                if seen & labels:
                    raise ValueError("class-incremental tasks must have disjoint class sets")
                seen |= labels
        elif self.mode == MODE_DOMAIN_INCREMENTAL:
            if len(self.eval_sets) != 1:
                raise ValueError("domain-incremental splits have exactly one eval set")
            if set(self.tasks) & set(self.eval_sets[0]):
                raise ValueError("train and test domains must be disjoint")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def num_eval_sets(self) -> int:
        return len(self.eval_sets)

    def to_dict(self) -> dict:
        return {"mode": self.mode,
                "tasks": [list(t) if self.mode == MODE_CLASS_INCREMENTAL else t
                          for t in self.tasks],
                "eval_sets": [list(e) for e in self.eval_sets],
                "seed": self.seed}


def make_class_incremental_split(num_classes: int, num_tasks: int,
                                 seed: int | None = None) -> SplitSpec:
    """Partition labels 0..num_classes-1 into ordered disjoint tasks.

    seed=None keeps label order; otherwise the labels are shuffled with the
    portable generator first. The last task absorbs any remainder.
    """
    if num_tasks > num_classes:
        raise ValueError(f"num_tasks {num_tasks} exceeds num_classes {num_classes}")
    labels = list(range(num_classes))
    if seed is not None:
        stream = Xoshiro256StarStar(seed)
        labels = [labels[i] for i in stream.permutation(num_classes)]
    sizes = partition_evenly(num_classes, num_tasks)
    tasks = []
    start = 0
    for size in sizes:
        tasks.append(tuple(labels[start:start + size]))
        start += size
    return SplitSpec(mode=MODE_CLASS_INCREMENTAL, tasks=tuple(tasks),
                     eval_sets=tuple(tasks), seed=seed)


def make_domain_incremental_split(train_task_ids, test_task_ids) -> SplitSpec:
    """Ordered train domains plus one held-out union-of-domains eval set."""
    train = tuple(int(t) for t in train_task_ids)
    test = tuple(int(t) for t in test_task_ids)
    if not train or not test:
        raise ValueError("train and test domain lists must be non-empty")
    if set(train) & set(test):
        raise ValueError("train and test domains must be disjoint")
    return SplitSpec(mode=MODE_DOMAIN_INCREMENTAL, tasks=train,
                     eval_sets=(test,), seed=None)


@dataclass
class AccuracyMatrix:
    """values[t][i] = accuracy on eval set i after training task t."""

    values: np.ndarray  # (T, E) float64, NaN where undefined
    counts: np.ndarray  # (T, E) int64
    mode: str

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]

    @property
    def num_eval_sets(self) -> int:
        return self.values.shape[1]


def average_accuracy(matrix: AccuracyMatrix) -> float:
    """Unweighted mean of the fully populated final row."""
    final = matrix.values[-1]
    if np.isnan(final).any():
        raise ValueError("final matrix row is not fully populated")
    return float(np.mean(final))


def forgetting(matrix: AccuracyMatrix) -> float:
    """Mean best-ever-minus-final gap over eval sets 1..T-1 (raw, unclamped)."""
    if matrix.mode != MODE_CLASS_INCREMENTAL:
        raise ValueError("forgetting is defined for class-incremental runs only")
    t = matrix.num_tasks
    if t < 2:
        raise ValueError("forgetting requires at least two tasks")
    gaps = []
    for i in range(t - 1):
        best = matrix.values[i:t - 1, i].max()
        gaps.append(best - matrix.values[t - 1, i])
    return float(np.mean(gaps))


@dataclass(frozen=True)
class RunOptions:
    metric: DistanceMetric = DistanceMetric.SQUARED_EUCLIDEAN
    shuffle_seed: int | None = None
    threads: int | None = None
    probe_config: ProbeConfig = field(default_factory=ProbeConfig)
    audit_state: bool = True


@dataclass
class RunReport:
    learner: str
    metric: str
    average_accuracy: float
    forgetting: float | None
    forgetting_note: str | None
    matrix: AccuracyMatrix
    fingerprint: str
    footnotes: list[str] = field(default_factory=list)
    run_name: str | None = None

    def to_dict(self) -> dict:
        values = [[None if math.isnan(v) else v for v in row]
                  for row in self.matrix.values.tolist()]
        return {
            "format": "protocl-run-report",
            "version": 1,
            "run_name": self.run_name or self.learner,
            "learner": self.learner,
            "metric": self.metric,
            "mode": self.matrix.mode,
            "average_accuracy": self.average_accuracy,
            "forgetting": self.forgetting,
            "forgetting_note": self.forgetting_note,
            "matrix": {"values": values, "counts": self.matrix.counts.tolist()},
            "fingerprint": self.fingerprint,
            "footnotes": self.footnotes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def from_dict(data: dict) -> "RunReport":
        if data.get("format") != "protocl-run-report":
            raise ValueError("not a run report document")
        values = np.array([[math.nan if v is None else v for v in row]
                           for row in data["matrix"]["values"]], dtype=np.float64)
        values = values.reshape(values.shape[0], -1)
        matrix = AccuracyMatrix(values=values,
                                counts=np.array(data["matrix"]["counts"],
                                                dtype=np.int64).reshape(values.shape),
                                mode=data["mode"])
        return RunReport(learner=data["learner"], metric=data["metric"],
                         average_accuracy=data["average_accuracy"],
                         forgetting=data["forgetting"],
                         forgetting_note=data.get("forgetting_note"),
                         matrix=matrix, fingerprint=data["fingerprint"],
                         footnotes=list(data.get("footnotes", [])),
                         run_name=data.get("run_name"))


def matrix_csv(matrix: AccuracyMatrix) -> str:
    """CSV of populated cells; tasks and eval sets are 1-based."""
    lines = [CSV_HEADER]
    for t in range(matrix.num_tasks):
        for i in range(matrix.num_eval_sets):
            v = matrix.values[t, i]
            if math.isnan(v):
                continue
            lines.append(f"{t + 1},{i + 1},{float(v)!r},{int(matrix.counts[t, i])}")
    return "\n".join(lines) + "\n"


def scenario_fingerprint(spec: SplitSpec, train_header: DatasetHeader,
                         test_header: DatasetHeader) -> str:
    payload = {
        "spec": spec.to_dict(),
        "train": [train_header.dim, train_header.record_count,
                  train_header.num_classes, train_header.num_tasks],
        "test": [test_header.dim, test_header.record_count,
                 test_header.num_classes, test_header.num_tasks],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def default_threads() -> int:
    env = os.environ.get("PROTO_CL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class _NmcLearner:
    def __init__(self, dim: int, metric: DistanceMetric):
        self.table = PrototypeTable(dim)
        self.metric = metric

    def train_task(self, labels, vectors) -> None:
        self.table.observe_stream(labels, vectors)

    def seen_classes(self) -> np.ndarray:
        return self.table.class_labels()

    def predict(self, X, candidates) -> np.ndarray:
        return predict_labels(X, self.table, self.metric, candidates)

    def state_size_bytes(self) -> int:
        return self.table.state_size_bytes()


class _ProbeLearner:
    def __init__(self, dim: int, num_classes: int, config: ProbeConfig):
        self.probe = zero_probe(num_classes, dim, config)
        self.config = config
        self._seen: set[int] = set()

    def train_task(self, labels, vectors) -> None:
        self._seen.update(int(c) for c in np.unique(labels))
        self.probe = train_linear_probe((vectors, labels),
                                        self.probe.num_classes,
                                        self.config, probe=self.probe)

    def seen_classes(self) -> np.ndarray:
        return np.array(sorted(self._seen), dtype=np.int64)

    def predict(self, X, candidates) -> np.ndarray:
        return predict_linear_batch(X, self.probe, candidates)

    def state_size_bytes(self) -> int:
        return self.probe.state_size_bytes()


def _evaluate(learner, X: np.ndarray, y: np.ndarray,
              candidates: np.ndarray, threads: int) -> tuple[int, int]:
    """Correct count over one eval set, fanned out across query chunks.

    Integer counts summed once keep the result independent of the chunking.
    """
    total = X.shape[0]
    if total == 0:
        return 0, 0
    chunks = max(1, min(threads * 4, total))
    bounds = np.linspace(0, total, chunks + 1, dtype=np.int64)
    spans = [(int(bounds[i]), int(bounds[i + 1]))
             for i in range(chunks) if bounds[i] < bounds[i + 1]]

    def count_span(span):
        lo, hi = span
        pred = learner.predict(X[lo:hi], candidates)
        return int((pred == y[lo:hi]).sum())

    if threads <= 1 or len(spans) == 1:
        correct = sum(count_span(s) for s in spans)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            correct = sum(pool.map(count_span, spans))
    return correct, total


def _audit_state(learner, num_classes: int, dim: int) -> None:
    bound = num_classes * dim * 8 + 128 * num_classes + 4096
    size = learner.state_size_bytes()
    if size > bound:
        raise AssertionError(
            f"learner retains {size} bytes, exceeding the exemplar-free "
            f"bound of {bound} bytes for {num_classes} classes x dim {dim}")


def run_scenario(train: Dataset, test: Dataset, spec: SplitSpec,
                 learner: str = LEARNER_NMC,
                 options: RunOptions = RunOptions(),
                 run_name: str | None = None) -> RunReport:
    """Sequential training over the split's tasks, evaluating after each."""
    if train.dim != test.dim:
        raise ValueError("train and test dimensionality differ")
    dim = train.dim
    num_classes = max(train.header.num_classes, test.header.num_classes)

    train_classes = set(np.unique(train.class_labels).tolist())
    if spec.mode == MODE_CLASS_INCREMENTAL:
        spec_classes = set()
        for task in spec.tasks:
            spec_classes |= set(task)
        missing = spec_classes - train_classes
        if missing:
            raise ValueError(
                f"split references classes absent from the training set: "
                f"{sorted(missing)[:10]}")
    else:
        train_domains = set(np.unique(train.task_ids).tolist())
        missing = set(spec.tasks) - train_domains
        if missing:
            raise ValueError(
                f"split references train domains absent from the training "
                f"set: {sorted(missing)}")

    if learner == LEARNER_NMC:
        model = _NmcLearner(dim, options.metric)
    elif learner == LEARNER_LINEAR_PROBE:
        model = _ProbeLearner(dim, num_classes, options.probe_config)
    else:
        raise ValueError(f"unknown learner {learner!r}")

    threads = options.threads if options.threads else default_threads()
    t_count, e_count = spec.num_tasks, spec.num_eval_sets
    values = np.full((t_count, e_count), np.nan, dtype=np.float64)
    counts = np.zeros((t_count, e_count), dtype=np.int64)

    eval_cache = _build_eval_sets(test, spec)
    shuffle_stream = (Xoshiro256StarStar(options.shuffle_seed)
                      if options.shuffle_seed is not None else None)

    for t in range(t_count):
        labels, vectors = _task_training_data(train, spec, t)
        if labels.shape[0] == 0:
            raise ValueError(f"task {t} selects no training records")
        if shuffle_stream is not None:
            order = np.array(shuffle_stream.permutation(labels.shape[0]),
                             dtype=np.int64)
            labels, vectors = labels[order], vectors[order]
        model.train_task(labels, vectors)
        if options.audit_state:
            _audit_state(model, num_classes, dim)

        candidates = model.seen_classes()
        for i in range(e_count):
            if spec.mode == MODE_CLASS_INCREMENTAL and i > t:
                continue
            ex, ey = eval_cache[i]
            correct, total = _evaluate(model, ex, ey, candidates, threads)
            values[t, i] = correct / total if total else math.nan
            counts[t, i] = total

    matrix = AccuracyMatrix(values=values, counts=counts, mode=spec.mode)
    avg = average_accuracy(matrix)
    forg = None
    note = None
    if spec.mode == MODE_CLASS_INCREMENTAL and t_count >= 2:
        forg = forgetting(matrix)
        if learner == LEARNER_NMC:
            note = "informational; not part of this learner's headline metric"

    footnotes = []
    final_counts = counts[-1]
    if spec.mode == MODE_CLASS_INCREMENTAL and len(set(final_counts.tolist())) > 1:
        footnotes.append(
            "average_accuracy is an unweighted mean over evaluation sets; "
            f"set sizes differ: {final_counts.tolist()}")

    return RunReport(learner=learner, metric=options.metric.value,
                     average_accuracy=avg, forgetting=forg,
                     forgetting_note=note, matrix=matrix,
                     fingerprint=scenario_fingerprint(spec, train.header,
                                                      test.header),
                     footnotes=footnotes, run_name=run_name)


def _task_training_data(train: Dataset, spec: SplitSpec, t: int):
    if spec.mode == MODE_CLASS_INCREMENTAL:
        mask = np.isin(train.class_labels, np.array(spec.tasks[t], dtype=np.int64))
    else:
        mask = train.task_ids == spec.tasks[t]
    labels = train.class_labels[mask]
    vectors = np.ascontiguousarray(train.vectors[mask])  # stays float32
    return labels, vectors


def _build_eval_sets(test: Dataset, spec: SplitSpec):
    sets = []
    for i in range(spec.num_eval_sets):
        if spec.mode == MODE_CLASS_INCREMENTAL:
            mask = np.isin(test.class_labels,
                           np.array(spec.eval_sets[i], dtype=np.int64))
        else:
            mask = np.isin(test.task_ids,
                           np.array(spec.eval_sets[i], dtype=np.int64))
        sets.append((np.ascontiguousarray(test.vectors[mask], dtype=np.float64),
                     test.class_labels[mask]))
    return sets
