"""Benchmark registry: images, label maps, canonical task assignments.

Every loader yields ``(PIL image, class_label, task_id)`` per item.
Class-incremental benchmarks carry ``task_id = 0`` in the files (the
evaluation harness assigns tasks from its split spec); CoRe50 carries its
session index 0..10 as the domain tag.

Archives are read from ``data_root`` and, for the torchvision-backed
datasets, downloaded on demand. The file-based benchmarks name their
expected directory and source URL when missing:

* ImageNet-R: https://people.eecs.berkeley.edu/~hendrycks/imagenet-r.tar
  extracted to ``<data_root>/imagenet-r/<wnid>/*.jpg`` (200 classes,
  30,000 images; no official split, so a deterministic per-class 80/20
  split is derived from seeded shuffles of sorted filenames).
* CoRe50: http://bias.csr.unibo.it/maltoni/download/core50/core50_128x128.zip
  extracted to ``<data_root>/core50_128x128/s<1..11>/o<1..50>/*.png``
  (50 objects, 11 sessions, 164,866 frames). Sessions 3, 7 and 10
  (1-based) are the held-out domains, the usual protocol.
* notMNIST: no canonical host; mirror
  http://yaroslavvb.com/upload/notMNIST/notMNIST_small.tar.gz extracted
  to ``<data_root>/notMNIST_small/<A..J>/*.png``. A few archive members
  are corrupt and are skipped, so its counts are recorded but not pinned;
  the sidecar records the sha256 of whatever archive was used.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

CORE50_TEST_SESSIONS = (2, 6, 9)  # 0-based; sessions 3, 7, 10 in 1-based naming
CORE50_TRAIN_SESSIONS = tuple(s for s in range(11) if s not in CORE50_TEST_SESSIONS)
FIVE_DATASETS_ORDER = ("mnist", "svhn", "notmnist", "fashion-mnist", "cifar10")
IMAGENET_R_SPLIT_SEED = 0
IMAGENET_R_TEST_FRACTION = 0.2


@dataclass(frozen=True)
class ExpectedCounts:
    """Published sizes; None means unpinned (checked for presence only).

    per_label_range_records entries are (lo, hi, count): the number of
    records with lo <= class_label < hi, when that quantity is published.
    """

    records: int | None
    num_classes: int
    num_tasks: int
    per_label_range_records: tuple = ()


@dataclass(frozen=True)
class ExtractionJob:
    benchmark: str
    out_dir: Path
    data_root: Path
    model: str = "google/vit-base-patch16-224-in21k"
    device: str = "cpu"
    batch_size: int = 64
    limit: int | None = None  # per-split cap, smoke runs only


def _to_rgb(img) -> Image.Image:
    if isinstance(img, np.ndarray):
        img = Image.fromarray(img)
    return img.convert("RGB")


def _missing(path: Path, url: str) -> FileNotFoundError:
    return FileNotFoundError(
        f"expected benchmark data at {path}; download {url} and extract it there")


class SplitCifar100:
    name = "split-cifar100"
    num_classes = 100
    num_tasks = 1

    def items(self, split: str, data_root: Path) -> Iterator:
        from torchvision.datasets import CIFAR100
        ds = CIFAR100(str(data_root), train=split == "train", download=True)
        for img, label in ds:
            yield _to_rgb(img), int(label), 0

    def expected(self, split: str) -> ExpectedCounts:
        return ExpectedCounts(records=50_000 if split == "train" else 10_000,
                              num_classes=100, num_tasks=1)


class SplitImagenetR:
    name = "split-imagenet-r"
    num_classes = 200
    num_tasks = 1
    url = "https://people.eecs.berkeley.edu/~hendrycks/imagenet-r.tar"

    def _per_class_files(self, data_root: Path) -> dict:
        root = Path(data_root) / "imagenet-r"
        if not root.is_dir():
            raise _missing(root, self.url)
        classes = sorted(p.name for p in root.iterdir() if p.is_dir())
        if len(classes) != self.num_classes:
            raise ValueError(f"{root}: found {len(classes)} class directories, "
                             f"expected {self.num_classes}")
        return {label: sorted((root / wnid).glob("*.jpg"))
                for label, wnid in enumerate(classes)}

    def items(self, split: str, data_root: Path) -> Iterator:
        rng = np.random.default_rng(IMAGENET_R_SPLIT_SEED)
        for label, files in self._per_class_files(data_root).items():
            order = rng.permutation(len(files))
            n_test = max(1, int(len(files) * IMAGENET_R_TEST_FRACTION))
            chosen = order[:n_test] if split == "test" else order[n_test:]
            for i in sorted(chosen):
                with Image.open(files[i]) as img:
                    yield img.convert("RGB"), label, 0

    def expected(self, split: str) -> ExpectedCounts:
        # 30,000 total; per-split sizes depend on per-class rounding
        return ExpectedCounts(records=None, num_classes=200, num_tasks=1)


class Core50:
    name = "core50"
    num_classes = 50
    num_tasks = 11
    url = "http://bias.csr.unibo.it/maltoni/download/core50/core50_128x128.zip"

    def items(self, split: str, data_root: Path) -> Iterator:
        root = Path(data_root) / "core50_128x128"
        if not root.is_dir():
            raise _missing(root, self.url)
        sessions = (CORE50_TRAIN_SESSIONS if split == "train"
                    else CORE50_TEST_SESSIONS)
        for session in sessions:
            sdir = root / f"s{session + 1}"
            if not sdir.is_dir():
                raise _missing(sdir, self.url)
            for obj in range(50):
                odir = sdir / f"o{obj + 1}"
                for file in sorted(odir.glob("*.png")):
                    with Image.open(file) as img:
                        yield img.convert("RGB"), obj, session

    def expected(self, split: str) -> ExpectedCounts:
        # 164,866 frames across all 11 sessions; per-session counts vary
        return ExpectedCounts(records=None, num_classes=50, num_tasks=11)


class FiveDatasets:
    """MNIST, SVHN, notMNIST, FashionMNIST, CIFAR10; one task per dataset.

    Labels are offset by 10 per dataset in the order above, so the label
    range [10 * t, 10 * t + 10) is exactly task t and a label-order
    5-task split reproduces the dataset boundaries.
    """

    name = "5-datasets"
    num_classes = 50
    num_tasks = 1
    notmnist_url = "http://yaroslavvb.com/upload/notMNIST/notMNIST_small.tar.gz"

    _train_sizes = {"mnist": 60_000, "svhn": 73_257, "notmnist": None,
                    "fashion-mnist": 60_000, "cifar10": 50_000}
    _test_sizes = {"mnist": 10_000, "svhn": 26_032, "notmnist": None,
                   "fashion-mnist": 10_000, "cifar10": 10_000}

    def _notmnist_items(self, split: str, data_root: Path) -> Iterator:
        root = Path(data_root) / "notMNIST_small"
        if not root.is_dir():
            raise _missing(root, self.notmnist_url)
        rng = np.random.default_rng(0)
        for digit, letter in enumerate("ABCDEFGHIJ"):
            files = sorted((root / letter).glob("*.png"))
            order = rng.permutation(len(files))
            n_test = max(1, len(files) // 5)
            chosen = order[:n_test] if split == "test" else order[n_test:]
            for i in sorted(chosen):
                try:
                    with Image.open(files[i]) as img:
                        yield img.convert("RGB"), digit
                except OSError:
                    continue  # the archive ships a few corrupt members

    def _dataset_items(self, kind: str, split: str, data_root: Path) -> Iterator:
        train = split == "train"
        if kind == "mnist":
            from torchvision.datasets import MNIST
            ds = MNIST(str(data_root), train=train, download=True)
        elif kind == "svhn":
            from torchvision.datasets import SVHN
            ds = SVHN(str(data_root / "svhn"),
                      split="train" if train else "test", download=True)
        elif kind == "fashion-mnist":
            from torchvision.datasets import FashionMNIST
            ds = FashionMNIST(str(data_root), train=train, download=True)
        elif kind == "cifar10":
            from torchvision.datasets import CIFAR10
            ds = CIFAR10(str(data_root), train=train, download=True)
        elif kind == "notmnist":
            yield from self._notmnist_items(split, data_root)
            return
        else:
            raise ValueError(f"unknown sub-dataset {kind}")
        for img, label in ds:
            yield _to_rgb(img), int(label)

    def items(self, split: str, data_root: Path) -> Iterator:
        for task, kind in enumerate(FIVE_DATASETS_ORDER):
            for img, label in self._dataset_items(kind, split, data_root):
                yield img, 10 * task + label, 0

    def expected(self, split: str) -> ExpectedCounts:
        sizes = self._train_sizes if split == "train" else self._test_sizes
        ranges = tuple((10 * t, 10 * t + 10, sizes[kind])
                       for t, kind in enumerate(FIVE_DATASETS_ORDER)
                       if sizes[kind] is not None)
        return ExpectedCounts(records=None, num_classes=50, num_tasks=1,
                              per_label_range_records=ranges)


REGISTRY = {bench.name: bench for bench in
            (SplitCifar100(), SplitImagenetR(), Core50(), FiveDatasets())}


def get_benchmark(name: str):
    try:
        return REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; "
                         f"choose from {sorted(REGISTRY)}") from None
