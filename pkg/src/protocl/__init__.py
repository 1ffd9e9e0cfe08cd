"""Streaming class-mean prototypes over frozen embeddings.

The learner's entire state is one running mean vector and count per class;
classification is nearest-mean. The package bundles the binary embedding
format, the prototype store, the classifier (plus a linear-probe
comparator), and a class-/domain-incremental evaluation harness.
"""

__version__ = "0.1.0"

from .classifier import (DistanceMetric, LinearProbe, Prediction, ProbeConfig,
                         load_probe, predict, predict_batch, predict_labels,
                         predict_linear, save_probe, train_linear_probe)
from .prototypes import (ClassPrototype, PrototypeTable, batch_mean,
                         load_table, merge, save_table)
from .protocol import (AccuracyMatrix, RunOptions, RunReport, SplitSpec,
                       average_accuracy, forgetting,
                       make_class_incremental_split,
                       make_domain_incremental_split, run_scenario)
from .store import (Dataset, DatasetHeader, EmbeddingRecord, ValidationReport,
                    Violation, iter_records, open_dataset, read_dataset,
                    validate_dataset, write_dataset)
from .synth import SyntheticSpec, generate_synthetic

__all__ = [
    "AccuracyMatrix", "ClassPrototype", "Dataset", "DatasetHeader",
    "DistanceMetric", "EmbeddingRecord", "LinearProbe", "Prediction",
    "ProbeConfig", "PrototypeTable", "RunOptions", "RunReport", "SplitSpec",
    "SyntheticSpec", "ValidationReport", "Violation", "average_accuracy",
    "batch_mean", "forgetting", "generate_synthetic", "iter_records",
    "load_probe", "load_table", "make_class_incremental_split",
    "make_domain_incremental_split", "merge", "open_dataset", "predict",
    "predict_batch", "predict_labels", "predict_linear", "read_dataset",
    "run_scenario", "save_probe", "save_table", "train_linear_probe",
    "validate_dataset", "write_dataset",
]
