"""Check an exported embedding file against its benchmark's published sizes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .benchmarks import ExpectedCounts, get_benchmark
from .embd1 import read_embd1


@dataclass
class VerifyReport:
    path: str
    entries: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.entries

    def add(self, message: str) -> None:
        self.entries.append(message)


def verify_export(path, expected: ExpectedCounts, expected_dim: int | None = None) -> VerifyReport:
    """Mismatches become report entries, never exceptions."""
    report = VerifyReport(path=str(path))
    header, labels, tasks, vectors = read_embd1(path)

    if expected_dim is not None and header["dim"] != expected_dim:
        report.add(f"dim is {header['dim']}, expected {expected_dim}")
    if expected.records is not None and header["record_count"] != expected.records:
        report.add(f"record_count is {header['record_count']}, "
                   f"expected {expected.records}")
    if header["num_classes"] != expected.num_classes:
        report.add(f"num_classes is {header['num_classes']}, "
                   f"expected {expected.num_classes}")
    if header["num_tasks"] != expected.num_tasks:
        report.add(f"num_tasks is {header['num_tasks']}, "
                   f"expected {expected.num_tasks}")

    present = np.bincount(labels, minlength=expected.num_classes)
    for missing in np.nonzero(present == 0)[0]:
        report.add(f"class {int(missing)} has no records")

    for lo, hi, count in expected.per_label_range_records:
        actual = int(((labels >= lo) & (labels < hi)).sum())
        if actual != count:
            report.add(f"classes [{lo}, {hi}) have {actual} records, "
                       f"expected {count}")

    finite = np.isfinite(vectors)
    if not finite.all():
        rec, coord = np.argwhere(~finite)[0]
        bad = int((~finite).any(axis=1).sum())
        report.add(f"non-finite entries in {bad} records (first at record "
                   f"{int(rec)}, coordinate {int(coord)})")
    return report


def verify_benchmark_export(path, benchmark_name: str, split: str,
                            expected_dim: int | None = None) -> VerifyReport:
    benchmark = get_benchmark(benchmark_name)
    return verify_export(path, benchmark.expected(split), expected_dim)
