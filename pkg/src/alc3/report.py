"""Flag-quality metrics against ground truth, parameter sweeps, and
figure-reproduction exports (plot-ready CSVs, markdown summary)."""

from __future__ import annotations

import csv
import dataclasses
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import classifier as clf
from .data import DataError, Dataset, TaskKind, training_view
from .engine import (
    EngineConfig, IterationRecord, Strategy, auto_correct, flag_for_annotation,
    misannotation_scores, _flag_rng, _prediction_table, train_seed,
    HISTORY_BASE_COLUMNS, write_history_csv,
)
from .noise import round_half_away


@dataclass(frozen=True)
class MpEvaluation:
    strategy: Strategy
    M: float
    iteration: int
    precision: float
    recall: float
    vacuous_recall: bool = False   # nothing was misannotated; recall reported as 1.0


def mp_precision_recall(flagged_ids, dataset: Dataset, strategy: Strategy = Strategy.ALC,
                        M: float = 0.0, iteration: int = 1) -> MpEvaluation:
    """Flag quality against ground truth, evaluated before annotation is
    applied: precision over the flag set, recall over the misannotated set.

    With nothing misannotated recall is vacuously 1.0, flagged as such so
    sweep plots stay well-defined near full cleanliness.
    """
    if not dataset.has_ground_truth():
        raise DataError("MP evaluation requires ground truth on every example")
    flagged = set(flagged_ids)
    misannotated = {ex.id for ex in dataset.examples if ex.current_label != ex.ground_truth}
    hits = len(flagged & misannotated)
    precision = hits / len(flagged) if flagged else 0.0
    if misannotated:
        return MpEvaluation(strategy, M, iteration, precision, hits / len(misannotated))
    return MpEvaluation(strategy, M, iteration, precision, 1.0, vacuous_recall=True)


def sweep_M(dataset: Dataset, strategies, M_values, config: EngineConfig,
            out_csv=None) -> list[MpEvaluation]:
    """First-iteration MP evaluation for every (strategy, M) pair.

    One model is trained per run config and shared across all cells; the
    auto-correcting strategies evaluate against a copy updated by
    auto-correction, exactly as their first iteration would see it.
    """
    if not dataset.has_ground_truth():
        raise DataError("sweep requires ground truth")
    M_values = list(M_values)
    for M in M_values:
        if not 0.0 < M < 1.0:
            raise DataError(f"M must lie in (0, 1), got {M}")

    model = clf.train(training_view(dataset), dataset.label_space,
                      replace(config.train, seed=train_seed(config)))
    rows: list[MpEvaluation] = []
    for strategy in strategies:
        strategy = Strategy(strategy)
        d = dataset.copy()
        predictions = _prediction_table(model, d)
        if strategy.auto_corrects:
            auto_correct(model, d, config.delta, predictions)
        scores = misannotation_scores(model, d, predictions)
        for M in M_values:
            cell_cfg = replace(config, strategy=strategy, M=M)
            rng = _flag_rng(cell_cfg, _cell_seed(config.seed, strategy.value, M))
            flagged = flag_for_annotation(scores, d, cell_cfg, rng)
            rows.append(mp_precision_recall(flagged, d, strategy, M))
    if out_csv is not None:
        _write_mp_csv(out_csv, rows)
    return rows


def _cell_seed(base_seed: int, *parts) -> int:
    """Independent per-cell stream: stable hash of (base seed, cell coordinates)."""
    material = json.dumps([base_seed, *parts], sort_keys=True)
    return clf.stable_hash(material) % (2 ** 31)


def data_size_sweep(dataset: Dataset, fractions, config: EngineConfig, M: float = 0.025,
                    out_csv=None) -> list[tuple[float, float]]:
    """First-iteration ALC precision after training on a class-stratified
    subsample of each requested fraction."""
    if not dataset.has_ground_truth():
        raise DataError("sweep requires ground truth")
    if dataset.label_space.task_kind is not TaskKind.CLASSIFICATION:
        raise DataError("data-size sweep supports classification only")
    seen = set()
    unique_fractions = []
    for f in fractions:
        if f in seen:
            warnings.warn(f"duplicate fraction {f} dropped")
            continue
        if not 0.0 < f <= 1.0:
            raise DataError(f"fraction must lie in (0, 1], got {f}")
        seen.add(f)
        unique_fractions.append(f)

    by_class: dict[str, list[int]] = {}
    for pos, ex in enumerate(dataset.examples):
        by_class.setdefault(ex.ground_truth, []).append(pos)

    rows = []
    for fraction in unique_fractions:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([config.seed, _cell_seed(config.seed, "datasize", fraction)])))
        keep: list[int] = []
        for cls in dataset.label_space.classes:
            members = by_class.get(cls, [])
            k = round_half_away(fraction * len(members))
            if k < 2:
                raise DataError(
                    f"fraction {fraction} leaves class {cls!r} with {k} example(s); need >= 2")
            picked = rng.choice(len(members), size=k, replace=False)
            keep.extend(members[int(i)] for i in sorted(picked))
        keep.sort()
        sub = Dataset(f"{dataset.name}@{fraction}", dataset.label_space,
                      [dataclasses.replace(dataset.examples[i]) for i in keep])
        model = clf.train(training_view(sub), sub.label_space,
                          replace(config.train, seed=train_seed(config)))
        scores = misannotation_scores(model, sub)
        cell_cfg = replace(config, strategy=Strategy.ALC, M=M)
        flagged = flag_for_annotation(scores, sub, cell_cfg, _flag_rng(cell_cfg, 1))
        rows.append((fraction, mp_precision_recall(flagged, sub, Strategy.ALC, M).precision))
    if out_csv is not None:
        path = Path(out_csv)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fraction", "mp_precision"])
            for fraction, precision in rows:
                writer.writerow([repr(float(fraction)), repr(float(precision))])
    return rows


def _write_mp_csv(path, rows: list[MpEvaluation]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "M", "iteration", "precision", "recall", "vacuous_recall"])
        for r in rows:
            writer.writerow([r.strategy.value, repr(float(r.M)), r.iteration,
                             repr(float(r.precision)), repr(float(r.recall)),
                             int(r.vacuous_recall)])
    return path


def load_run_records(run_dir) -> list[IterationRecord]:
    run_dir = Path(run_dir)
    records = []
    k = 1
    while (run_dir / f"iteration_{k}.json").exists():
        records.append(IterationRecord.from_dict(
            json.loads((run_dir / f"iteration_{k}.json").read_text(encoding="utf-8"))))
        k += 1
    if not records:
        raise DataError(f"no iteration records found under {run_dir}")
    return records


def emit_report(run_dir, out_dir=None) -> dict[str, Path]:
    """Rebuild history.csv, write plot-ready CSVs and a markdown summary from a
    run's artifacts. Regeneration is byte-identical."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_run_records(run_dir)

    manifest = {}
    if (run_dir / "manifest.json").exists():
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))

    paths = {"history": write_history_csv(out_dir / "history.csv", records)}

    metric_keys = sorted(records[0].eval)
    perf = out_dir / "performance_vs_budget.csv"
    with open(perf, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cumulative_annotated_fraction"] + metric_keys)
        for r in records:
            writer.writerow([repr(float(r.cumulative_annotated_fraction))]
                            + [repr(float(r.eval[k])) for k in metric_keys])
    paths["performance_vs_budget"] = perf

    pmp = out_dir / "pmp_vs_iteration.csv"
    with open(pmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "p_mp", "eta_k"])
        for r in records:
            writer.writerow([r.iteration, repr(float(r.p_mp)), repr(float(r.eta_k))])
    paths["pmp_vs_iteration"] = pmp

    summary = out_dir / "report.md"
    lines = ["# Correction run report", ""]
    if manifest:
        cfg = manifest.get("config", {})
        lines += [
            f"- dataset: `{manifest.get('dataset', {}).get('path', 'unknown')}` "
            f"(sha256 `{manifest.get('dataset', {}).get('sha256', '')[:12]}...`)",
            f"- strategy: {cfg.get('strategy')}, M={cfg.get('M')}, delta={cfg.get('delta')}, "
            f"seed={cfg.get('seed')}",
        ]
    stopped_by = manifest.get("stopped_by")
    if stopped_by is not None:
        final_metrics = ", ".join(f"{k}={records[-1].eval[k]:.4f}" for k in metric_keys)
        lines.append(f"- stopped by: **{stopped_by}** after {len(records)} iteration(s); "
                     f"final {final_metrics}")
    lines += ["", "| " + " | ".join(HISTORY_BASE_COLUMNS + metric_keys) + " |",
              "|" + "---|" * (len(HISTORY_BASE_COLUMNS) + len(metric_keys))]
    for r in records:
        cells = [str(r.iteration), str(r.m_flag), str(r.m_corr), str(r.auto_corrected),
                 str(r.m_filter), f"{r.p_mp:.4f}", f"{r.eta_k:.4f}",
                 f"{r.cumulative_annotated_fraction:.4f}"]
        cells += [f"{r.eval[k]:.4f}" for k in metric_keys]
        lines.append("| " + " | ".join(cells) + " |")
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths["summary"] = summary
    return paths
