"""Command-line entry points.

Exit codes: 0 a stop rule fired (or the command succeeded), 2 usage error,
3 data error, 4 iteration budget exhausted without a stop rule firing.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from . import classifier as clf
from .annotator import OracleAnnotator, ReplayAnnotator
from .data import (
    DataError, Dataset, LabelSpace, TaskKind, dataset_stats, load_dataset, save_dataset,
)
from .engine import (
    BudgetCap, CloseToOracle, EngineConfig, MpPrecisionFloor, Strategy, run_until_stop,
)
from .noise import NoiseKind, NoiseSpec, inject_noise, write_noise_sidecar
from .report import data_size_sweep, emit_report, sweep_M

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BUDGET = 4


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def infer_label_space(path: Path, fmt: str, task: str) -> LabelSpace:
    """Collect the label vocabulary from a dataset file (labels plus ground
    truth), sorted for stability."""
    labels: set[str] = set()
    if fmt == "csv":
        import csv as _csv

        with open(path, encoding="utf-8", newline="") as fh:
            for row in _csv.DictReader(fh):
                labels.add(row["label"])
                if row.get("ground_truth"):
                    labels.add(row["ground_truth"])
    else:
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                if not raw.strip():
                    continue
                rec = json.loads(raw)
                for key in ("label", "ground_truth", "original_label"):
                    value = rec.get(key)
                    if isinstance(value, str):
                        labels.add(value)
                    elif isinstance(value, list):
                        labels.update(value)
    if not labels:
        raise DataError(f"no labels found in {path}")
    if task == "sequence":
        tags = sorted(labels)
        if "O" not in tags:
            tags = ["O"] + tags
        return LabelSpace.for_sequence_labeling(tuple(tags))
    return LabelSpace.for_classification(tuple(sorted(labels)))


def _load(path: str, fmt: str, task: str, labels: str | None) -> Dataset:
    p = Path(path)
    if labels:
        names = tuple(x.strip() for x in labels.split(",") if x.strip())
        space = (LabelSpace.for_sequence_labeling(names) if task == "sequence"
                 else LabelSpace.for_classification(names))
    else:
        space = infer_label_space(p, fmt, task)
    return load_dataset(p, space, fmt=fmt)


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    parser.add_argument("--task", choices=["classification", "sequence"],
                        default="classification")
    parser.add_argument("--labels", help="comma-separated label space (default: inferred)")


def cmd_inject_noise(args) -> int:
    dataset = _load(args.input, args.format, args.task, args.labels)
    if not dataset.has_ground_truth():
        # a clean dataset is its own ground truth for injection purposes
        for ex in dataset.examples:
            ex.ground_truth = ex.current_label
    spec = NoiseSpec(NoiseKind(args.kind), args.fraction, args.seed)
    model = None
    if spec.kind is not NoiseKind.RANDOM:
        cfg = clf.TrainConfig(dimension=2 ** 15, epochs=args.model_epochs, seed=spec.seed)
        model = clf.train([(ex.input, ex.ground_truth) for ex in dataset.examples],
                          dataset.label_space, cfg)
    noised, corrupted = inject_noise(dataset, spec, model=model)
    out = Path(args.out)
    save_dataset(noised, out)
    sidecar = write_noise_sidecar(out.with_suffix(out.suffix + ".provenance.json"),
                                  noised, spec, corrupted)
    print(f"wrote {out} ({len(corrupted)} corrupted ids; sidecar {sidecar})")
    return EXIT_OK


def _engine_config(args, file_config: dict) -> EngineConfig:
    """Config file first, CLI flags override."""
    merged = dict(file_config)
    for key, value in (
        ("strategy", args.strategy), ("M", args.M), ("delta", args.delta),
        ("filter_multiplier", args.filter_multiplier), ("eta0", args.eta0),
        ("max_iterations", args.max_iterations), ("seed", args.seed),
    ):
        if value is not None:
            merged[key] = value
    train = dict(merged.get("train", {}))
    if args.epochs is not None:
        train["epochs"] = args.epochs
    if args.dimension is not None:
        train["dimension"] = args.dimension
    if train:
        merged["train"] = train

    rules = list(merged.get("stop_rules", []))
    if args.band is not None or args.oracle_value is not None:
        rules = [r for r in rules if r.get("kind") != "close_to_oracle"]
        rules.append({"kind": "close_to_oracle", "band": args.band if args.band is not None else 0.01,
                      "oracle_value": args.oracle_value})
    if args.mp_floor is not None:
        rules = [r for r in rules if r.get("kind") != "mp_precision_floor"]
        rules.append({"kind": "mp_precision_floor", "threshold": args.mp_floor})
    if args.budget_cap is not None:
        rules = [r for r in rules if r.get("kind") != "budget_cap"]
        rules.append({"kind": "budget_cap", "max_fraction": args.budget_cap})
    merged["stop_rules"] = rules
    return EngineConfig.from_dict(merged)


def _write_manifest(run_dir: Path, config: EngineConfig, dataset_path: Path,
                    test_path: Path | None, stopped_by=None) -> None:
    manifest = {
        "toolkit_version": __version__,
        "config": config.to_dict(),
        "dataset": {"path": str(dataset_path), "sha256": _sha256(dataset_path)},
        "artifacts": {
            "history": "history.csv",
            "corrected_dataset": "dataset_corrected.jsonl",
            "checkpoint": "checkpoint.json",
            "transcript": "annotations.jsonl",
        },
        "stopped_by": stopped_by,
    }
    if test_path is not None:
        manifest["test"] = {"path": str(test_path), "sha256": _sha256(test_path)}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")


def cmd_run(args) -> int:
    dataset = _load(args.dataset, args.format, args.task, args.labels)
    test = _load(args.test, args.format, args.task, args.labels) if args.test else None
    if test is None:
        raise DataError("a held-out --test dataset is required to evaluate iterations")

    file_config = {}
    if args.config:
        file_config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = _engine_config(args, file_config)

    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(run_dir, config, Path(args.dataset),
                    Path(args.test) if args.test else None)

    if args.annotator == "oracle":
        annotator = OracleAnnotator(dataset)
    elif args.annotator == "replay":
        if not args.transcript:
            raise DataError("--annotator replay requires --transcript")
        annotator = ReplayAnnotator(args.transcript)
    else:
        return _serve_run(args, dataset, test, config, run_dir)

    result = run_until_stop(dataset, test, annotator, config, run_dir=run_dir)
    _write_manifest(run_dir, config, Path(args.dataset),
                    Path(args.test) if args.test else None, stopped_by=result.stopped_by)
    last = result.records[-1] if result.records else None
    if last is not None:
        metrics = ", ".join(f"{k}={v:.4f}" for k, v in sorted(last.eval.items()))
        print(f"{config.strategy.value}: {len(result.records)} iteration(s), "
              f"annotated {last.cumulative_annotated_fraction:.1%}, {metrics}")
    if result.stopped_by is None:
        print("stopped: iteration budget exhausted", file=sys.stderr)
        return EXIT_BUDGET
    print(f"stopped by: {result.stopped_by}")
    return EXIT_OK


def _serve_run(args, dataset, test, config, run_dir) -> int:
    from .service import ServeSession, serve

    session = ServeSession(dataset, test, config, run_dir=run_dir,
                           tokens=args.token or (), lease_timeout=args.lease_timeout,
                           console_dir=args.console_dir)
    serve(session, host=args.host, port=args.port)
    return EXIT_OK


def cmd_serve(args) -> int:
    args.annotator = "serve"
    return cmd_run(args)


def cmd_report(args) -> int:
    paths = emit_report(args.run_dir, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset = _load(args.dataset, args.format, args.task, args.labels)
    if not dataset.has_ground_truth():
        raise DataError("ground truth required for sweeps")
    config = EngineConfig(seed=args.seed if args.seed is not None else 0,
                          train=clf.TrainConfig(
                              dimension=args.dimension or 2 ** 18,
                              epochs=args.epochs or 10))
    values = [float(v) for v in args.values.split(",")]
    if args.mode == "M":
        strategies = [Strategy(s) for s in args.strategies.split(",")]
        rows = sweep_M(dataset, strategies, values, config, out_csv=args.out)
        for r in rows:
            print(f"{r.strategy.value} M={r.M}: precision={r.precision:.4f} "
                  f"recall={r.recall:.4f}{' (vacuous)' if r.vacuous_recall else ''}")
    else:
        rows = data_size_sweep(dataset, values, config, M=args.M or 0.025, out_csv=args.out)
        for fraction, precision in rows:
            print(f"fraction={fraction}: precision={precision:.4f}")
    return EXIT_OK


def cmd_stats(args) -> int:
    dataset = _load(args.dataset, args.format, args.task, args.labels)
    print(json.dumps(dataset_stats(dataset), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alc3",
                                     description="Iterative label correction toolkit")
    parser.add_argument("--version", action="version", version=f"alc3 {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject-noise", help="write a synthetically noised copy of a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in NoiseKind])
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--model-epochs", type=int, default=4,
                   help="training epochs for the conditional-noise model")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("run", help="execute a correction run")
    _add_run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run with the HTTP annotation service")
    _add_run_args(p, serve_defaults=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="emit report bundle from run artifacts")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="MP quality sweeps over M or data size")
    p.add_argument("--mode", choices=["M", "datasize"], required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--values", required=True, help="comma-separated M values or fractions")
    p.add_argument("--strategies", default="RLC,ALC,DALC,ALC3")
    p.add_argument("--M", type=float, help="fixed M for datasize mode")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dimension", type=int)
    p.add_argument("--out", help="CSV output path")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="dataset statistics (size, distribution, noise)")
    p.add_argument("--dataset", required=True)
    _add_dataset_args(p)
    p.set_defaults(func=cmd_stats)
    return parser


def _add_run_args(p: argparse.ArgumentParser, serve_defaults: bool = False) -> None:
    p.add_argument("--dataset", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--M", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--filter-multiplier", dest="filter_multiplier", type=float)
    p.add_argument("--eta0", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, help="classifier training epochs")
    p.add_argument("--dimension", type=int, help="feature dimension")
    p.add_argument("--config", help="JSON config file; CLI flags take precedence")
    p.add_argument("--band", type=float, help="close-to-oracle band (activates the rule)")
    p.add_argument("--oracle-value", dest="oracle_value", type=float)
    p.add_argument("--mp-floor", dest="mp_floor", type=float)
    p.add_argument("--budget-cap", dest="budget_cap", type=float)
    p.add_argument("--out", required=True, help="run artifacts directory")
    if not serve_defaults:
        p.add_argument("--annotator", choices=["oracle", "replay", "serve"], default="oracle")
        p.add_argument("--transcript", help="JSONL transcript for --annotator replay")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--token", action="append", help="annotator bearer token (repeatable)")
    p.add_argument("--lease-timeout", dest="lease_timeout", type=float, default=600.0)
    p.add_argument("--console-dir", dest="console_dir", help="built web console directory")
    _add_dataset_args(p)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "serve":
        args.transcript = None
    try:
        return args.func(args)
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
