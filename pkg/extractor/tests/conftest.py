import numpy as np
import pytest
from PIL import Image

import embx.benchmarks as benchmarks


class FakeBenchmark:
    """Tiny in-memory image benchmark; colors correlate with classes."""

    name = "fake4"
    num_classes = 4
    num_tasks = 1

    def __init__(self, train_per_class=6, test_per_class=3, size=16):
        self.sizes = {"train": train_per_class, "test": test_per_class}
        self.size = size

    def items(self, split, data_root):
        rng = np.random.default_rng(0 if split == "train" else 1)
        for label in range(self.num_classes):
            for _ in range(self.sizes[split]):
                base = np.full((self.size, self.size, 3), 60 * label,
                               dtype=np.uint8)
                noise = rng.integers(0, 40, size=base.shape, dtype=np.uint8)
                yield Image.fromarray(base + noise), label, 0

    def expected(self, split):
        return benchmarks.ExpectedCounts(
            records=self.num_classes * self.sizes[split],
            num_classes=self.num_classes, num_tasks=1)


@pytest.fixture()
def fake_benchmark():
    bench = FakeBenchmark()
    benchmarks.REGISTRY[bench.name] = bench
    yield bench
    benchmarks.REGISTRY.pop(bench.name, None)
