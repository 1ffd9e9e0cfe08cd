"""Frozen-backbone feature extraction for continual-learning benchmarks."""

__version__ = "0.1.0"

from .backbones import StubBackbone, ViTBackbone, load_backbone
from .benchmarks import ExtractionJob, get_benchmark
from .extract import extract, extract_split
from .verify import verify_benchmark_export, verify_export

__all__ = [
    "ExtractionJob", "StubBackbone", "ViTBackbone", "extract",
    "extract_split", "get_benchmark", "load_backbone",
    "verify_benchmark_export", "verify_export",
]
