"""Nearest-mean classification over a prototype table, plus a linear probe.

``predict`` is the scalar reference path: one query, a per-prototype scan
in float64. ``predict_batch``/``predict_labels`` route the same distances
through the batch kernel and must agree with the scalar path in argmin
(and within 1e-5 relative error in reported distance). Ties always go to
the smallest class label.

The linear probe is a softmax head trained with plain mini-batch SGD on
frozen features, the usual comparator that adds a fully-connected layer
on top of the extractor. PROB1 files persist its state:

    magic "PROB" | version u32 | num_classes u32 | dim u32
    | learning_rate f64 | weight_decay f64 | epochs u32 | batch_size u32
    | seed u64 | weights num_classes x dim f64 | biases num_classes x f64
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .prototypes import PrototypeTable
from .rng import Xoshiro256StarStar
from .store import (BadMagicError, EmbeddingRecord, TruncatedFileError,
                    UnsupportedVersionError)


class DistanceMetric(enum.Enum):
    SQUARED_EUCLIDEAN = "squared_euclidean"
    EUCLIDEAN = "euclidean"
    COSINE = "cosine_distance"


@dataclass
class Prediction:
    class_label: int
    distance: float
    per_class_distances: np.ndarray | None = None


def _distance_matrix(queries: np.ndarray, means: np.ndarray,
                     metric: DistanceMetric) -> np.ndarray:
    if metric is DistanceMetric.COSINE:
        return kernels.cosine_matrix(queries, means)
    d = kernels.sqeuclidean_matrix(queries, means)
    if metric is DistanceMetric.EUCLIDEAN:
        np.sqrt(d, out=d)
    return d


def _check_query(x, dim: int) -> np.ndarray:
    q = np.asarray(x, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != dim:
        raise ValueError(f"query has shape {q.shape}, expected ({dim},)")
    if not np.isfinite(q).all():
        raise ValueError("query contains non-finite entries")
    return q


def predict(x, table: PrototypeTable,
            metric: DistanceMetric = DistanceMetric.SQUARED_EUCLIDEAN) -> Prediction:
    """Scalar reference path: per-prototype scan in float64."""
    if len(table) == 0:
        raise ValueError("cannot predict with an empty prototype table")
    q = _check_query(x, table.dim)
    labels = table.class_labels()
    distances = np.empty(labels.shape[0], dtype=np.float64)
    for i, proto in enumerate(table.prototypes()):
        if metric is DistanceMetric.COSINE:
            qn = np.sqrt(float(q @ q))
            mn = np.sqrt(float(proto.mean @ proto.mean))
            if qn == 0.0 or mn == 0.0:
                distances[i] = 1.0
            else:
                distances[i] = 1.0 - float(q @ proto.mean) / (qn * mn)
        else:
            diff = q - proto.mean
            d = float(diff @ diff)
            distances[i] = np.sqrt(d) if metric is DistanceMetric.EUCLIDEAN else d
    best = int(np.argmin(distances))  # first minimum = smallest label
    return Prediction(class_label=int(labels[best]),
                      distance=float(distances[best]),
                      per_class_distances=distances)


def predict_batch(X, table: PrototypeTable,
                  metric: DistanceMetric = DistanceMetric.SQUARED_EUCLIDEAN,
                  keep_distances: bool = False) -> list[Prediction]:
    """Vectorized path over the batch kernel; elementwise equals predict."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be (N, dim), got shape {X.shape}")
    if X.shape[0] == 0:
        return []
    if len(table) == 0:
        raise ValueError("cannot predict with an empty prototype table")
    if X.shape[1] != table.dim:
        raise ValueError(f"queries have dim {X.shape[1]}, expected {table.dim}")
    if not np.isfinite(X).all():
        raise ValueError("queries contain non-finite entries")
    labels = table.class_labels()
    distances = _distance_matrix(X, table.means_matrix(), metric)
    best = distances.argmin(axis=1)
    rows = np.arange(X.shape[0])
    return [Prediction(class_label=int(labels[best[i]]),
                       distance=float(distances[i, best[i]]),
                       per_class_distances=distances[i] if keep_distances else None)
            for i in rows]


def predict_labels(X, table: PrototypeTable,
                   metric: DistanceMetric = DistanceMetric.SQUARED_EUCLIDEAN,
                   candidates: np.ndarray | None = None) -> np.ndarray:
    """Predicted labels only; optional candidate restriction for the harness."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    labels = table.class_labels()
    means = table.means_matrix()
    if candidates is not None:
        keep = np.isin(labels, candidates)
        if not keep.any():
            raise ValueError("no prototype matches the candidate set")
        labels, means = labels[keep], means[keep]
    distances = _distance_matrix(X, means, metric)
    return labels[distances.argmin(axis=1)]


# --- linear probe -----------------------------------------------------------

@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 128
    weight_decay: float = 0.0
    seed: int = 0


@dataclass
class LinearProbe:
    weights: np.ndarray  # (num_classes, dim) float64
    biases: np.ndarray   # (num_classes,) float64
    config: ProbeConfig = field(default_factory=ProbeConfig)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def state_size_bytes(self) -> int:
        return self.weights.nbytes + self.biases.nbytes


def zero_probe(num_classes: int, dim: int,
               config: ProbeConfig = ProbeConfig()) -> LinearProbe:
    return LinearProbe(weights=np.zeros((num_classes, dim)),
                       biases=np.zeros(num_classes), config=config)


def cross_entropy_loss_and_grad(weights, biases, X, y, weight_decay: float = 0.0):
    """Mean softmax cross-entropy with L2 decay on weights only.

    Returns (loss, grad_weights, grad_biases); gradients are analytic and
    checked against central finite differences in the test suite.
    """
    logits = X @ weights.T + biases
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = X.shape[0]
    nll = -np.log(probs[np.arange(n), y] + 1e-300).mean()
    loss = nll + 0.5 * weight_decay * float((weights * weights).sum())
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grad_w = delta.T @ X / n + weight_decay * weights
    grad_b = delta.sum(axis=0) / n
    return loss, grad_w, grad_b


def _as_xy(train, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(train, tuple):
        X, y = train
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    else:
        records: Sequence[EmbeddingRecord] = train
        if len(records) == 0:
            raise ValueError("empty training set")
        X = np.stack([r.vector for r in records]).astype(np.float64)
        y = np.array([r.class_label for r in records], dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError("class label out of range for the probe head")
    return X, y


def train_linear_probe(train, num_classes: int,
                       config: ProbeConfig = ProbeConfig(),
                       probe: LinearProbe | None = None) -> LinearProbe:
    """Mini-batch SGD on softmax cross-entropy; deterministic given seed.

    Starts from zero weights unless continuing an existing probe (the
    sequential task-by-task comparator). Epoch shuffles come from one
    portable stream seeded with config.seed.
    """
    X, y = _as_xy(train, num_classes)
    if probe is None:
        probe = zero_probe(num_classes, X.shape[1], config)
    elif probe.dim != X.shape[1] or probe.num_classes != num_classes:
        raise ValueError("probe shape does not match the training data")
    W = probe.weights.copy()
    b = probe.biases.copy()
    stream = Xoshiro256StarStar(config.seed)
    n = X.shape[0]
    for _ in range(config.epochs):
        order = np.array(stream.permutation(n), dtype=np.int64)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, gw, gb = cross_entropy_loss_and_grad(
                W, b, X[idx], y[idx], config.weight_decay)
            W -= config.learning_rate * gw
            b -= config.learning_rate * gb
    if not (np.isfinite(W).all() and np.isfinite(b).all()):
        raise ArithmeticError("probe training diverged to non-finite parameters")
    return LinearProbe(weights=W, biases=b, config=config)


def predict_linear(x, probe: LinearProbe,
                   candidates: np.ndarray | None = None) -> int:
    """argmax of Wx + b; ties to the smallest label."""
    q = _check_query(x, probe.dim)
    logits = probe.weights @ q + probe.biases
    labels = np.arange(probe.num_classes)
    if candidates is not None:
        keep = np.isin(labels, candidates)
        labels, logits = labels[keep], logits[keep]
    return int(labels[np.argmax(logits)])


def predict_linear_batch(X, probe: LinearProbe,
                         candidates: np.ndarray | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    logits = X @ probe.weights.T + probe.biases
    labels = np.arange(probe.num_classes)
    if candidates is not None:
        keep = np.isin(labels, candidates)
        labels, logits = labels[keep], logits[:, keep]
    return labels[logits.argmax(axis=1)]


# --- PROB1 persistence -------------------------------------------------------

PROB_MAGIC = b"PROB"
PROB_VERSION = 1
_PROB_HEADER = struct.Struct("<4sIIIddIIQ")


def save_probe(probe: LinearProbe, path) -> None:
    cfg = probe.config
    with open(path, "wb") as f:
        f.write(_PROB_HEADER.pack(PROB_MAGIC, PROB_VERSION,
                                  probe.num_classes, probe.dim,
                                  cfg.learning_rate, cfg.weight_decay,
                                  cfg.epochs, cfg.batch_size, cfg.seed))
        f.write(np.ascontiguousarray(probe.weights, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(probe.biases, dtype="<f8").tobytes())


def load_probe(path) -> LinearProbe:
    with open(path, "rb") as f:
        raw = f.read(_PROB_HEADER.size)
        if len(raw) < _PROB_HEADER.size:
            raise TruncatedFileError(
                f"{path}: file ends at byte {len(raw)} inside the header",
                byte_offset=len(raw))
        magic, version, num_classes, dim, lr, wd, epochs, batch, seed = \
            _PROB_HEADER.unpack(raw)
        if magic != PROB_MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}, expected {PROB_MAGIC!r}")
        if version != PROB_VERSION:
            raise UnsupportedVersionError(
                f"{path}: unsupported version {version}, expected {PROB_VERSION}")
        wn = num_classes * dim * 8
        wbytes = f.read(wn)
        bbytes = f.read(num_classes * 8)
        if len(wbytes) < wn or len(bbytes) < num_classes * 8:
            offset = _PROB_HEADER.size + len(wbytes) + len(bbytes)
            raise TruncatedFileError(
                f"{path}: parameter payload truncated at byte {offset}",
                byte_offset=offset)
        weights = np.frombuffer(wbytes, dtype="<f8").reshape(num_classes, dim).copy()
        biases = np.frombuffer(bbytes, dtype="<f8").copy()
    return LinearProbe(weights=weights, biases=biases,
                       config=ProbeConfig(learning_rate=lr, epochs=epochs,
                                          batch_size=batch, weight_decay=wd,
                                          seed=seed))
