"""embx command line: extract features, verify exports.

Exit codes: 0 success, 1 verification mismatches, 2 I/O or usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .benchmarks import REGISTRY, ExtractionJob
from .extract import extract
from .verify import verify_benchmark_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embx",
        description="Frozen-backbone feature extraction to EMBD1 files.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ext = sub.add_parser("extract", help="extract train/test embeddings")
    p_ext.add_argument("--benchmark", required=True, choices=sorted(REGISTRY))
    p_ext.add_argument("--data-root", required=True,
                       help="where benchmark archives live / get downloaded")
    p_ext.add_argument("--out-dir", required=True)
    p_ext.add_argument("--model", default="google/vit-base-patch16-224-in21k",
                       help="transformers id, 'timm:<model>', or 'stub[:dim]'")
    p_ext.add_argument("--device", default="cpu")
    p_ext.add_argument("--batch-size", type=int, default=64)
    p_ext.add_argument("--limit", type=int, default=None,
                       help="cap records per split (smoke runs)")

    p_ver = sub.add_parser("verify", help="check an export against published sizes")
    p_ver.add_argument("path")
    p_ver.add_argument("--benchmark", required=True, choices=sorted(REGISTRY))
    p_ver.add_argument("--split", required=True, choices=["train", "test"])
    p_ver.add_argument("--dim", type=int, default=None,
                       help="expected feature width (768 for ViT-B/16)")
    return parser


def cmd_extract(args) -> int:
    job = ExtractionJob(benchmark=args.benchmark, out_dir=Path(args.out_dir),
                        data_root=Path(args.data_root), model=args.model,
                        device=args.device, batch_size=args.batch_size,
                        limit=args.limit)
    train, test = extract(job)
    print(f"wrote {train}")
    print(f"wrote {test}")
    return 0


def cmd_verify(args) -> int:
    report = verify_benchmark_export(args.path, args.benchmark, args.split,
                                     expected_dim=args.dim)
    if report.ok:
        print(f"{args.path}: ok")
        return 0
    for entry in report.entries:
        print(entry)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"extract": cmd_extract, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
