"""Command-line front end: synth, run, validate, report.

Exit codes are a stable scripting contract:

    0  success
    1  validation or domain error (invalid dataset content, spec/dataset
       mismatch, failed validation)
    2  I/O or usage error (missing files, bad flags, bad config keys)

``run`` accepts a flat ``key = value`` config file; command-line flags
override file values, and the written report plus the config reproduce
the run exactly. ``--threads`` falls back to the PROTO_CL_THREADS
environment variable, then to the core count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .classifier import DistanceMetric, ProbeConfig
from .protocol import (LEARNER_LINEAR_PROBE, LEARNER_NMC,
                       MODE_CLASS_INCREMENTAL, MODE_DOMAIN_INCREMENTAL,
                       RunOptions, RunReport, make_class_incremental_split,
                       make_domain_incremental_split, matrix_csv, run_scenario)
from .store import FormatError, open_dataset, validate_dataset, write_arrays, write_sidecar
from .synth import SyntheticSpec, generate_arrays

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


class ConfigError(Exception):
    """Bad config file contents (usage-class failure)."""


_METRICS = {
    "squared_euclidean": DistanceMetric.SQUARED_EUCLIDEAN,
    "euclidean": DistanceMetric.EUCLIDEAN,
    "cosine": DistanceMetric.COSINE,
    "cosine_distance": DistanceMetric.COSINE,
}

_RUN_KEYS = {
    "train": str, "test": str, "mode": str, "num_tasks": int,
    "split_seed": int, "train_domains": str, "test_domains": str,
    "learner": str, "metric": str, "shuffle_seed": int, "threads": int,
    "report": str, "csv": str, "run_name": str,
    "probe_lr": float, "probe_epochs": int, "probe_batch_size": int,
    "probe_weight_decay": float, "probe_seed": int,
}


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _id_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated id list, got {text!r}")


def load_config(path) -> dict:
    """Flat ``key = value`` document; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _RUN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _RUN_KEYS[key](val)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {val!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protocl",
        description="Streaming class-mean prototypes, nearest-mean "
                    "classification, and continual-learning evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a synthetic Gaussian EMBD1 dataset")
    p_synth.add_argument("--classes", type=_positive_int, required=True)
    p_synth.add_argument("--dim", type=_positive_int, required=True)
    p_synth.add_argument("--per-class", type=_positive_int, required=True)
    p_synth.add_argument("--sep", type=_positive_float, default=8.0,
                         help="distance between adjacent class centers, in sigmas")
    p_synth.add_argument("--sigma", type=_positive_float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--tasks", type=_positive_int, default=1,
                         help="even label-order class-to-task partition")
    p_synth.add_argument("-o", "--output", required=True)

    p_run = sub.add_parser("run", help="run a continual-learning scenario")
    p_run.add_argument("--config", help="flat key = value config file")
    p_run.add_argument("--train", help="training EMBD1 file")
    p_run.add_argument("--test", help="test EMBD1 file")
    p_run.add_argument("--mode", choices=["class", "domain",
                                          MODE_CLASS_INCREMENTAL,
                                          MODE_DOMAIN_INCREMENTAL])
    p_run.add_argument("--num-tasks", type=_positive_int, dest="num_tasks")
    p_run.add_argument("--split-seed", type=int, dest="split_seed")
    p_run.add_argument("--train-domains", dest="train_domains",
                       help="comma-separated task ids (domain mode)")
    p_run.add_argument("--test-domains", dest="test_domains")
    p_run.add_argument("--learner", choices=[LEARNER_NMC, LEARNER_LINEAR_PROBE])
    p_run.add_argument("--metric", choices=sorted(_METRICS))
    p_run.add_argument("--shuffle-seed", type=int, dest="shuffle_seed",
                       help="shuffle stream order within each task")
    p_run.add_argument("--threads", type=_positive_int)
    p_run.add_argument("--report", help="report path (default run_report.json)")
    p_run.add_argument("--csv", help="also write the accuracy matrix as CSV")
    p_run.add_argument("--run-name", dest="run_name")
    p_run.add_argument("--probe-lr", type=_positive_float, dest="probe_lr")
    p_run.add_argument("--probe-epochs", type=int, dest="probe_epochs")
    p_run.add_argument("--probe-batch-size", type=_positive_int,
                       dest="probe_batch_size")
    p_run.add_argument("--probe-weight-decay", type=float,
                       dest="probe_weight_decay")
    p_run.add_argument("--probe-seed", type=int, dest="probe_seed")

    p_val = sub.add_parser("validate", help="check an EMBD1 file's invariants")
    p_val.add_argument("path")

    p_rep = sub.add_parser("report", help="tabulate one or more run reports")
    p_rep.add_argument("paths", nargs="+")
    p_rep.add_argument("--csv", help="also write the table as CSV")
    return parser


def cmd_synth(args) -> int:
    spec = SyntheticSpec(num_classes=args.classes, dim=args.dim,
                         samples_per_class=args.per_class,
                         class_separation=args.sep, noise_sigma=args.sigma,
                         seed=args.seed)
    if args.tasks > args.classes:
        raise ValueError("--tasks cannot exceed --classes")
    labels, tasks, vectors = generate_arrays(spec, num_tasks=args.tasks)
    header = write_arrays(labels, tasks, vectors, args.output)
    write_sidecar(args.output, {
        "generator": {"kind": "gaussian-lattice",
                      "num_classes": spec.num_classes, "dim": spec.dim,
                      "samples_per_class": spec.samples_per_class,
                      "class_separation": spec.class_separation,
                      "noise_sigma": spec.noise_sigma, "seed": spec.seed,
                      "num_tasks": args.tasks},
    })
    print(f"wrote {args.output}: dim={header.dim} records={header.record_count} "
          f"classes={header.num_classes} tasks={header.num_tasks}")
    return EXIT_OK


def _merged_run_settings(args) -> dict:
    settings: dict = {
        "mode": "class", "num_tasks": 10, "learner": LEARNER_NMC,
        "metric": "squared_euclidean", "report": "run_report.json",
        "probe_lr": 0.01, "probe_epochs": 20, "probe_batch_size": 128,
        "probe_weight_decay": 0.0, "probe_seed": 0,
    }
    if args.config:
        settings.update(load_config(args.config))
    for key in _RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def cmd_run(args) -> int:
    cfg = _merged_run_settings(args)
    for required in ("train", "test"):
        if not cfg.get(required):
            raise ConfigError(f"missing required setting {required!r}")
    if cfg["metric"] not in _METRICS:
        raise ConfigError(f"unknown metric {cfg['metric']!r}")
    if cfg["learner"] not in (LEARNER_NMC, LEARNER_LINEAR_PROBE):
        raise ConfigError(f"unknown learner {cfg['learner']!r}")

    for path_key in ("train", "test"):
        report = validate_dataset(cfg[path_key])
        if not report.ok:
            print(f"{cfg[path_key]}: dataset validation failed", file=sys.stderr)
            for line in report.lines()[:20]:
                print(f"  {line}", file=sys.stderr)
            return EXIT_DOMAIN

    train = open_dataset(cfg["train"])
    test = open_dataset(cfg["test"])

    mode = cfg["mode"]
    if mode in ("class", MODE_CLASS_INCREMENTAL):
        spec = make_class_incremental_split(train.header.num_classes,
                                            int(cfg["num_tasks"]),
                                            cfg.get("split_seed"))
    elif mode in ("domain", MODE_DOMAIN_INCREMENTAL):
        if not cfg.get("train_domains") or not cfg.get("test_domains"):
            raise ConfigError("domain mode needs train_domains and test_domains")
        spec = make_domain_incremental_split(_id_list(str(cfg["train_domains"])),
                                             _id_list(str(cfg["test_domains"])))
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    options = RunOptions(
        metric=_METRICS[cfg["metric"]],
        shuffle_seed=cfg.get("shuffle_seed"),
        threads=cfg.get("threads"),
        probe_config=ProbeConfig(learning_rate=float(cfg["probe_lr"]),
                                 epochs=int(cfg["probe_epochs"]),
                                 batch_size=int(cfg["probe_batch_size"]),
                                 weight_decay=float(cfg["probe_weight_decay"]),
                                 seed=int(cfg["probe_seed"])),
    )
    report = run_scenario(train, test, spec, learner=cfg["learner"],
                          options=options, run_name=cfg.get("run_name"))

    Path(cfg["report"]).write_text(report.to_json() + "\n")
    if cfg.get("csv"):
        Path(cfg["csv"]).write_text(matrix_csv(report.matrix))

    print(f"Average Acc: {100.0 * report.average_accuracy:.2f}")
    if report.forgetting is not None:
        print(f"Forgetting: {100.0 * report.forgetting:.2f}")
    for note in report.footnotes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_validate(args) -> int:
    report = validate_dataset(args.path)
    if report.ok:
        print(f"{args.path}: ok")
        return EXIT_OK
    for line in report.lines():
        print(line)
    return EXIT_DOMAIN


def _fmt_pct(value) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def cmd_report(args) -> int:
    reports = []
    for path in args.paths:
        data = json.loads(Path(path).read_text())
        reports.append(RunReport.from_dict(data))
    reports.sort(key=lambda r: r.average_accuracy, reverse=True)

    rows = [(r.run_name or r.learner, "0", _fmt_pct(r.average_accuracy),
             _fmt_pct(r.forgetting)) for r in reports]
    headers = ("Method", "Buffer size", "Average Acc", "Forgetting")
    widths = [max(len(h), *(len(row[i]) for row in rows))
              for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))
    print(line)
    print("-" * len(line))
    for row in rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))

    if args.csv:
        lines = ["method,buffer_size,average_acc,forgetting"]
        lines += [",".join(row) for row in rows]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"synth": cmd_synth, "run": cmd_run,
                "validate": cmd_validate, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IsADirectoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
