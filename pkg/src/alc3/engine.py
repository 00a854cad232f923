"""The correction loop: misannotation scoring, strategy-specific flagging,
auto-correction, filtering, and iteration orchestration with stopping rules.

Strategies
    RLC   flag uniformly at random (baseline)
    ALC   flag the examples with the highest misannotation score
    DALC  ALC plus confident auto-correction before flagging
    ALC3  DALC plus probability-based filtering after annotation

One model is trained per iteration on the dataset as updated by the previous
iteration (auto-corrections included, filtered examples excluded); the
ephemeral state is then reset and a fresh set of auto-corrections, flags and
filter marks is selected from that model's predictions. Human labels are the
only permanent corrections.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import classifier as clf
from .annotator import AnnotationRequest, AnnotationResponse
from .data import (
    DataError, Dataset, Label, Source, TaskKind,
    apply_annotation, from_state_dict, reset_ephemeral, save_dataset,
    to_state_dict, training_view,
)
from .noise import round_half_away

CHECKPOINT_FORMAT_VERSION = 1


class Strategy(str, Enum):
    RLC = "RLC"
    ALC = "ALC"
    DALC = "DALC"
    ALC3 = "ALC3"

    @property
    def auto_corrects(self) -> bool:
        return self in (Strategy.DALC, Strategy.ALC3)

    @property
    def filters(self) -> bool:
        return self is Strategy.ALC3


@dataclass(frozen=True)
class CloseToOracle:
    """Stop once the held-out metric is within ``band`` of the oracle value
    (a model trained on ground-truth labels)."""

    band: float = 0.01
    oracle_value: float | None = None     # resolved at run start when None
    metric: str | None = None             # defaults to the task's primary metric

    kind = "close_to_oracle"


@dataclass(frozen=True)
class MpPrecisionFloor:
    """Stop when iteration precision drops below the floor: flagging is no
    longer paying for the annotator's time."""

    threshold: float

    kind = "mp_precision_floor"


@dataclass(frozen=True)
class BudgetCap:
    """Stop once the cumulative annotated fraction reaches the cap."""

    max_fraction: float

    kind = "budget_cap"


StopRule = CloseToOracle | MpPrecisionFloor | BudgetCap


def _stop_rule_to_dict(rule: StopRule) -> dict:
    d = {"kind": rule.kind}
    d.update({k: v for k, v in rule.__dict__.items()})
    return d


def _stop_rule_from_dict(d: dict) -> StopRule:
    kinds = {"close_to_oracle": CloseToOracle, "mp_precision_floor": MpPrecisionFloor,
             "budget_cap": BudgetCap}
    kwargs = {k: v for k, v in d.items() if k != "kind"}
    return kinds[d["kind"]](**kwargs)


@dataclass
class EngineConfig:
    strategy: Strategy = Strategy.ALC3
    M: float = 0.025
    delta: float = 0.9
    filter_multiplier: float = 3.0
    eta0: float | None = None            # estimated from data when None
    max_iterations: int = 20
    seed: int = 0
    stop_rules: tuple[StopRule, ...] = ()
    train: clf.TrainConfig = field(default_factory=clf.TrainConfig)

    def validate(self, dataset_size: int) -> None:
        if not 0.0 < self.M < 1.0:
            raise DataError(f"M must lie in (0, 1), got {self.M}")
        if round_half_away(self.M * dataset_size) < 1:
            raise DataError(f"M={self.M} flags zero examples on |d|={dataset_size}")
        if not 0.5 < self.delta <= 1.0:
            raise DataError(f"delta must lie in (0.5, 1], got {self.delta}")
        if self.filter_multiplier <= 0:
            raise DataError("filter multiplier must be positive")
        if self.eta0 is not None and not 0.0 <= self.eta0 < 1.0:
            raise DataError(f"eta0 must lie in [0, 1), got {self.eta0}")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be at least 1")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "M": self.M,
            "delta": self.delta,
            "filter_multiplier": self.filter_multiplier,
            "eta0": self.eta0,
            "max_iterations": self.max_iterations,
            "seed": self.seed,
            "stop_rules": [_stop_rule_to_dict(r) for r in self.stop_rules],
            "train": self.train.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "EngineConfig":
        return EngineConfig(
            strategy=Strategy(d.get("strategy", "ALC3")),
            M=d.get("M", 0.025),
            delta=d.get("delta", 0.9),
            filter_multiplier=d.get("filter_multiplier", 3.0),
            eta0=d.get("eta0"),
            max_iterations=d.get("max_iterations", 20),
            seed=d.get("seed", 0),
            stop_rules=tuple(_stop_rule_from_dict(r) for r in d.get("stop_rules", [])),
            train=clf.TrainConfig.from_dict(d["train"]) if "train" in d else clf.TrainConfig(),
        )


@dataclass(frozen=True)
class MisannotationScore:
    example_id: str
    score: float    # 1 - p(current label | input)


@dataclass
class IterationRecord:
    iteration: int
    m_flag: int
    m_corr: int
    auto_corrected: int
    m_filter: int
    p_mp: float
    eta_k: float
    eval: dict[str, float]
    cumulative_annotated_fraction: float
    token_mp_precision: float | None = None   # sequence tasks only

    def to_dict(self) -> dict:
        d = {
            "iteration": self.iteration,
            "m_flag": self.m_flag,
            "m_corr": self.m_corr,
            "auto_corrected": self.auto_corrected,
            "m_filter": self.m_filter,
            "p_mp": self.p_mp,
            "eta_k": self.eta_k,
            "eval": dict(self.eval),
            "cumulative_annotated_fraction": self.cumulative_annotated_fraction,
        }
        if self.token_mp_precision is not None:
            d["token_mp_precision"] = self.token_mp_precision
        return d

    @staticmethod
    def from_dict(d: dict) -> "IterationRecord":
        return IterationRecord(
            iteration=d["iteration"], m_flag=d["m_flag"], m_corr=d["m_corr"],
            auto_corrected=d["auto_corrected"], m_filter=d["m_filter"], p_mp=d["p_mp"],
            eta_k=d["eta_k"], eval=dict(d["eval"]),
            cumulative_annotated_fraction=d["cumulative_annotated_fraction"],
            token_mp_precision=d.get("token_mp_precision"),
        )


def train_seed(config: EngineConfig, iteration: int = 0) -> int:
    """Deterministic training seed, shared by every training in a run.

    The oracle reference and all in-loop models use the same batch-order seed,
    so consecutive models differ only through the data updates and the
    close-to-oracle band is not polluted by seed-to-seed training variance.
    """
    return int(np.random.SeedSequence([config.seed, 1]).generate_state(1)[0])


def _flag_rng(config: EngineConfig, iteration: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, iteration, 17])))


def _prediction_table(model: clf.ClassifierModel, dataset: Dataset):
    """Model outputs for every example, aligned with dataset order.

    Classification: (n, C) array. Sequence: list of (L_i, C) arrays.
    """
    if dataset.label_space.task_kind is TaskKind.CLASSIFICATION:
        X = clf.build_text_matrix([ex.input for ex in dataset.examples], model.config.dimension)
        return model.predict_proba_matrix(X)
    sentences = [ex.tokens for ex in dataset.examples]
    X = clf.build_token_matrix(sentences, model.config.dimension, model.config.context_window)
    P = model.predict_proba_matrix(X)
    out = []
    offset = 0
    for tokens in sentences:
        out.append(P[offset:offset + len(tokens)])
        offset += len(tokens)
    return out


def _label_prob(dataset: Dataset, predictions, position: int, label: Label) -> float:
    """p(label | input) under the prediction table; geometric-mean sentence
    probability for sequence tasks."""
    space = dataset.label_space
    if space.task_kind is TaskKind.CLASSIFICATION:
        return float(predictions[position][space.index_of(label)])
    probs = predictions[position]
    per_token = [float(probs[j, space.index_of(tag)]) for j, tag in enumerate(label)]
    return clf.sequence_label_prob(per_token)


def _predicted_label(dataset: Dataset, predictions, position: int):
    space = dataset.label_space
    if space.task_kind is TaskKind.CLASSIFICATION:
        return space.classes[int(np.argmax(predictions[position]))], float(np.max(predictions[position]))
    probs = predictions[position]
    idx = np.argmax(probs, axis=1)
    tags = tuple(space.entity_tags[int(i)] for i in idx)
    confidence = clf.sequence_label_prob([float(probs[j, i]) for j, i in enumerate(idx)])
    return tags, confidence


def misannotation_scores(model: clf.ClassifierModel, dataset: Dataset,
                         predictions=None) -> list[MisannotationScore]:
    """Score every non-human, unfiltered example with m = 1 - p(current | input).

    Human-annotated examples are exempt from all further correction machinery
    and get no score.
    """
    if predictions is None:
        predictions = _prediction_table(model, dataset)
    scores = []
    for pos, ex in enumerate(dataset.examples):
        if ex.source is Source.HUMAN or ex.filtered:
            continue
        p = _label_prob(dataset, predictions, pos, ex.current_label)
        scores.append(MisannotationScore(ex.id, 1.0 - p))
    return scores


def auto_correct(model: clf.ClassifierModel, dataset: Dataset, delta: float,
                 predictions=None) -> int:
    """Adopt the model's argmax label wherever it contradicts the current label
    with probability above delta; returns the number of labels changed.

    Agreeing predictions are untouched (nothing would change), and human
    labels are never overridden. For sequence tasks the threshold gates the
    sentence-level confidence (geometric mean of per-token argmax
    probabilities).
    """
    if predictions is None:
        predictions = _prediction_table(model, dataset)
    corrected = 0
    for pos, ex in enumerate(dataset.examples):
        if ex.source is Source.HUMAN:
            continue
        predicted, confidence = _predicted_label(dataset, predictions, pos)
        if predicted != ex.current_label and confidence > delta:
            ex.current_label = predicted
            ex.source = Source.AUTO_CORRECTED
            corrected += 1
    return corrected


def flag_for_annotation(scores, dataset: Dataset, config: EngineConfig,
                        rng: np.random.Generator) -> list[str]:
    """Pick round(M * |d|) examples for the annotator.

    RLC samples uniformly without replacement; the ALC family takes the
    highest misannotation scores, ties broken toward the lower id. Human
    labels are never eligible, and auto-correcting strategies do not flag the
    examples they just auto-corrected. Short eligibility flags whatever is
    left, with a warning.
    """
    target = round_half_away(config.M * len(dataset))
    score_by_id = {s.example_id: s.score for s in scores}
    eligible = []
    for ex in dataset.examples:
        if ex.source is Source.HUMAN or ex.id not in score_by_id:
            continue
        if config.strategy.auto_corrects and ex.source is Source.AUTO_CORRECTED:
            continue
        eligible.append(ex.id)
    if len(eligible) < target:
        warnings.warn(
            f"only {len(eligible)} eligible examples for {target} flags; flagging all"
        )
        target = len(eligible)
    if target == 0:
        return []
    if config.strategy is Strategy.RLC:
        picked = rng.choice(len(eligible), size=target, replace=False)
        return [eligible[int(i)] for i in sorted(picked)]
    ranked = sorted(eligible, key=lambda i: (-score_by_id[i], i))
    return ranked[:target]


def compute_mp_precision(flagged_ids, outcomes: dict[str, tuple[Label, Label]]) -> float:
    """p_MP = corrected / flagged, where corrected means the annotator's label
    differs from the label the example carried when flagged."""
    flagged_ids = list(flagged_ids)
    if not flagged_ids:
        raise DataError("no flagged examples; MP precision undefined")
    m_corr = sum(1 for i in flagged_ids if outcomes[i][0] != outcomes[i][1])
    return m_corr / len(flagged_ids)


def token_level_mp_precision(flagged_ids, outcomes: dict[str, tuple[Label, Label]]) -> float:
    """Sequence-task precision with every token of a flagged sentence counted
    as flagged: changed tokens / total tokens over the flagged sentences."""
    total = changed = 0
    for i in flagged_ids:
        before, after = outcomes[i]
        total += len(before)
        changed += sum(1 for a, b in zip(before, after) if a != b)
    if total == 0:
        raise DataError("no flagged tokens; token-level precision undefined")
    return changed / total


def compute_eta(eta0: float, corrections_history, dataset_size: int) -> float:
    """Remaining-noise estimate: eta0 minus the corrected fraction so far.

    May go negative once corrections exceed the initial noise estimate, which
    keeps the filter gate open whenever precision is positive.
    """
    return eta0 - sum(corrections_history) / dataset_size


def filter_count(m_corr: int, p_mp: float, eta_k: float, multiplier: float) -> int:
    """Piecewise filtering size: multiplier * m_corr when p_MP strictly beats
    the remaining-noise estimate, else zero."""
    if p_mp > eta_k:
        return round_half_away(multiplier * m_corr)
    return 0


def filter_examples(scores, dataset: Dataset, m_corr: int, p_mp: float, eta_k: float,
                    config: EngineConfig) -> list[str]:
    """Mark the lowest-label-probability (highest m) eligible examples as
    filtered, excluding them from the next training view. Reset re-admits
    them next iteration."""
    target = filter_count(m_corr, p_mp, eta_k, config.filter_multiplier)
    if target == 0:
        return []
    score_by_id = {s.example_id: s.score for s in scores}
    eligible = [ex.id for ex in dataset.examples
                if ex.source is not Source.HUMAN and not ex.filtered and ex.id in score_by_id]
    if len(eligible) < target:
        warnings.warn(f"only {len(eligible)} examples available for {target} filter slots")
        target = len(eligible)
    ranked = sorted(eligible, key=lambda i: (-score_by_id[i], i))
    chosen = ranked[:target]
    for example_id in chosen:
        dataset.get(example_id).filtered = True
    return chosen


@dataclass
class EngineState:
    """Carries the loop's memory between iterations (and across checkpoints)."""

    iteration: int = 0                       # completed iterations
    corrections: list[int] = field(default_factory=list)
    annotated_ids: list[str] = field(default_factory=list)
    records: list[IterationRecord] = field(default_factory=list)
    eta0: float | None = None
    oracle_value: float | None = None
    model: clf.ClassifierModel | None = None   # trained on the current dataset state
    stopped_by: str | None = None


@dataclass
class RunResult:
    records: list[IterationRecord]
    dataset: Dataset
    model: clf.ClassifierModel | None
    stopped_by: str | None                  # None when max_iterations ran out
    state: EngineState


def _test_items(test: Dataset) -> list:
    """Evaluation targets: ground truth when present, else the current label."""
    return [(ex.input, ex.ground_truth if ex.ground_truth is not None else ex.current_label)
            for ex in test.examples]


def _measured_noise_fraction(dataset: Dataset) -> float | None:
    if not dataset.has_ground_truth() or len(dataset) == 0:
        return None
    wrong = sum(1 for ex in dataset.examples if ex.current_label != ex.ground_truth)
    return wrong / len(dataset)


def resolve_eta0(config: EngineConfig, dataset: Dataset, test: Dataset | None) -> float:
    """eta0 as configured, else the noise fraction measured on the annotated
    held-out test split, else on the training dataset itself (simulation)."""
    if config.eta0 is not None:
        return config.eta0
    for d in (test, dataset):
        if d is not None:
            measured = _measured_noise_fraction(d)
            if measured is not None and measured > 0:
                return measured
    if config.strategy.filters:
        raise DataError("ALC3 needs eta0: none configured and no ground truth to estimate from")
    return 0.0


def _resolve_oracle_value(config: EngineConfig, dataset: Dataset, test: Dataset,
                          metric: str) -> float:
    """Train on ground-truth labels with the run's config and evaluate."""
    if not dataset.has_ground_truth():
        raise DataError("close-to-oracle stopping needs an oracle value or ground truth")
    view = [(ex.input, ex.ground_truth) for ex in dataset.examples]
    oracle_cfg = replace(config.train, seed=train_seed(config, 0))
    model = clf.train(view, dataset.label_space, oracle_cfg)
    return clf.evaluate(model, _test_items(test))[metric]


def _annotate_atomically(dataset: Dataset, flagged: list[str], requests,
                         annotator) -> dict[str, tuple[Label, Label]]:
    """Collect all responses, then apply: an annotator failure leaves the
    dataset untouched."""
    responses = annotator.annotate(requests)
    by_id = {r.example_id: r for r in responses}
    missing = [i for i in flagged if i not in by_id]
    if missing:
        raise DataError(f"annotator returned no response for {len(missing)} flagged ids")
    outcomes = {}
    for example_id in flagged:
        before = dataset.get(example_id).current_label
        apply_annotation(dataset, example_id, by_id[example_id].label)
        outcomes[example_id] = (before, by_id[example_id].label)
    return outcomes, responses


def run_iteration(dataset: Dataset, test: Dataset, annotator, config: EngineConfig,
                  state: EngineState, run_dir: Path | None = None) -> IterationRecord:
    """One full pass: reset ephemera, auto-correct, score, flag, annotate,
    filter, then retrain on the updated data and evaluate.

    The model scoring iteration k was trained at the end of iteration k-1 on
    the dataset including k-1's auto-corrections and filter marks; resetting
    here only frees the examples for reselection.
    """
    k = state.iteration + 1
    space = dataset.label_space

    if state.model is None:
        # Bootstrap (or resume): train on the view as it stood at the end of
        # the previous iteration, before its ephemera are reset below.
        state.model = clf.train(training_view(dataset), space,
                                replace(config.train, seed=train_seed(config, k)))
    model = state.model
    reset_ephemeral(dataset)

    predictions = _prediction_table(model, dataset)
    auto_corrected = (auto_correct(model, dataset, config.delta, predictions)
                      if config.strategy.auto_corrects else 0)
    scores = misannotation_scores(model, dataset, predictions)
    flagged = flag_for_annotation(scores, dataset, config, _flag_rng(config, k))

    pos_by_id = {ex.id: pos for pos, ex in enumerate(dataset.examples)}
    requests = []
    for example_id in flagged:
        pos = pos_by_id[example_id]
        ex = dataset.examples[pos]
        predicted, _ = _predicted_label(dataset, predictions, pos)
        probs = predictions[pos]
        requests.append(AnnotationRequest(
            example_id=example_id,
            input=ex.input,
            current_label=ex.current_label,
            model_prediction=np.asarray(probs).round(6).tolist(),
            predicted_label=predicted,
            iteration=k,
        ))

    if run_dir is not None:
        score_by_id = {s.example_id: s.score for s in scores}
        _write_flags(run_dir, k, requests, score_by_id)
        save_checkpoint(run_dir / "checkpoint.json", dataset, config, state,
                        pending={"iteration": k, "auto_corrected": auto_corrected,
                                 "flagged": flagged,
                                 "requests": [r.to_dict() for r in requests],
                                 "scores": {s.example_id: s.score for s in scores}})

    return _finish_iteration(dataset, test, annotator, config, state, k,
                             auto_corrected, scores, flagged, requests, run_dir)


def _finish_iteration(dataset: Dataset, test: Dataset, annotator, config: EngineConfig,
                      state: EngineState, k: int, auto_corrected: int, scores,
                      flagged: list[str], requests, run_dir: Path | None) -> IterationRecord:
    """Steps after the resumable point: annotate, filter, retrain, evaluate."""
    space = dataset.label_space
    n = len(dataset)

    if flagged:
        outcomes, responses = _annotate_atomically(dataset, flagged, requests, annotator)
        m_corr = sum(1 for i in flagged if outcomes[i][0] != outcomes[i][1])
        p_mp = compute_mp_precision(flagged, outcomes)
        token_precision = (token_level_mp_precision(flagged, outcomes)
                           if space.task_kind is TaskKind.SEQUENCE_LABELING else None)
        state.annotated_ids.extend(flagged)
        if run_dir is not None:
            _append_transcript(run_dir, responses)
    else:
        outcomes, m_corr, p_mp, token_precision = {}, 0, 0.0, None

    state.corrections.append(m_corr)
    eta_k = compute_eta(state.eta0, state.corrections, n)
    filtered = (filter_examples(scores, dataset, m_corr, p_mp, eta_k, config)
                if config.strategy.filters and flagged else [])

    state.model = clf.train(training_view(dataset), space,
                            replace(config.train, seed=train_seed(config, k + 1)))
    metrics = clf.evaluate(state.model, _test_items(test))

    record = IterationRecord(
        iteration=k,
        m_flag=len(flagged),
        m_corr=m_corr,
        auto_corrected=auto_corrected,
        m_filter=len(filtered),
        p_mp=p_mp,
        eta_k=eta_k,
        eval=metrics,
        cumulative_annotated_fraction=len(state.annotated_ids) / n,
        token_mp_precision=token_precision,
    )
    state.iteration = k
    state.records.append(record)

    if run_dir is not None:
        (run_dir / f"iteration_{k}.json").write_text(
            json.dumps(record.to_dict(), indent=2) + "\n", encoding="utf-8")
        save_checkpoint(run_dir / "checkpoint.json", dataset, config, state, pending=None)
    return record


def _check_stop(record: IterationRecord, config: EngineConfig,
                state: EngineState, metric: str) -> str | None:
    for rule in config.stop_rules:
        if isinstance(rule, CloseToOracle):
            oracle = rule.oracle_value if rule.oracle_value is not None else state.oracle_value
            target_metric = rule.metric or metric
            if record.eval[target_metric] >= oracle - rule.band:
                return rule.kind
        elif isinstance(rule, MpPrecisionFloor):
            if record.p_mp < rule.threshold:
                return rule.kind
        elif isinstance(rule, BudgetCap):
            if record.cumulative_annotated_fraction >= rule.max_fraction:
                return rule.kind
    if record.m_flag == 0:
        return "eligibility_exhausted"
    return None


def run_until_stop(dataset: Dataset, test: Dataset, annotator, config: EngineConfig,
                   run_dir=None, state: EngineState | None = None) -> RunResult:
    """Iterate until a stop rule fires or max_iterations is exhausted.

    ``stopped_by`` records the rule that fired; None means the iteration
    budget ran out first.
    """
    config.validate(len(dataset))
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    if state is None:
        state = EngineState()
    if state.eta0 is None:
        state.eta0 = resolve_eta0(config, dataset, test)
    metric = clf.primary_metric_name(dataset.label_space.task_kind)
    needs_oracle = any(isinstance(r, CloseToOracle) and r.oracle_value is None
                       for r in config.stop_rules)
    if needs_oracle and state.oracle_value is None:
        state.oracle_value = _resolve_oracle_value(config, dataset, test, metric)

    while state.iteration < config.max_iterations and state.stopped_by is None:
        record = run_iteration(dataset, test, annotator, config, state, run_dir)
        state.stopped_by = _check_stop(record, config, state, metric)

    if run_dir is not None:
        write_history_csv(run_dir / "history.csv", state.records)
        save_dataset(dataset, run_dir / "dataset_corrected.jsonl")
        if state.model is not None:
            clf.save_model(state.model, run_dir / "model_final.npz")
        save_checkpoint(run_dir / "checkpoint.json", dataset, config, state, pending=None)
    return RunResult(state.records, dataset, state.model, state.stopped_by, state)


def _write_flags(run_dir: Path, k: int, requests, score_by_id: dict[str, float]) -> None:
    with open(run_dir / f"flags_{k}.jsonl", "w", encoding="utf-8") as fh:
        for req in requests:
            rec = req.to_dict()
            rec["score"] = score_by_id[req.example_id]
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _append_transcript(run_dir: Path, responses) -> None:
    with open(run_dir / "annotations.jsonl", "a", encoding="utf-8") as fh:
        for resp in responses:
            fh.write(json.dumps(resp.to_dict(), ensure_ascii=False) + "\n")


HISTORY_BASE_COLUMNS = ["iteration", "m_flag", "m_corr", "auto_corrected", "m_filter",
                        "p_mp", "eta_k", "cumulative_annotated_fraction"]


def write_history_csv(path, records: list[IterationRecord]) -> Path:
    """One row per iteration; floats in shortest round-trip form so identical
    runs produce identical bytes."""
    path = Path(path)
    metric_keys = sorted(records[0].eval) if records else []
    has_token = any(r.token_mp_precision is not None for r in records)
    columns = HISTORY_BASE_COLUMNS + (["token_mp_precision"] if has_token else []) + metric_keys

    def fmt(v):
        return repr(float(v)) if isinstance(v, float) else str(v)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in records:
            row = [r.iteration, r.m_flag, r.m_corr, r.auto_corrected, r.m_filter,
                   fmt(r.p_mp), fmt(r.eta_k), fmt(r.cumulative_annotated_fraction)]
            if has_token:
                row.append(fmt(r.token_mp_precision) if r.token_mp_precision is not None else "")
            row += [fmt(r.eval[k]) for k in metric_keys]
            writer.writerow(row)
    return path


def save_checkpoint(path, dataset: Dataset, config: EngineConfig, state: EngineState,
                    pending: dict | None) -> Path:
    """Full engine + dataset snapshot. ``pending`` carries a flagged-but-not-
    yet-annotated batch so a paused run resumes bit-identically."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config.to_dict(),
        "dataset": to_state_dict(dataset),
        "state": {
            "iteration": state.iteration,
            "corrections": state.corrections,
            "annotated_ids": state.annotated_ids,
            "records": [r.to_dict() for r in state.records],
            "eta0": state.eta0,
            "oracle_value": state.oracle_value,
            "stopped_by": state.stopped_by,
        },
        "pending": pending,
    }
    path = Path(path)
    path.write_text(json.dumps(payload) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> tuple[Dataset, EngineConfig, EngineState, dict | None]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {payload['format_version']}")
    dataset = from_state_dict(payload["dataset"])
    config = EngineConfig.from_dict(payload["config"])
    s = payload["state"]
    state = EngineState(
        iteration=s["iteration"],
        corrections=list(s["corrections"]),
        annotated_ids=list(s["annotated_ids"]),
        records=[IterationRecord.from_dict(r) for r in s["records"]],
        eta0=s["eta0"],
        oracle_value=s["oracle_value"],
        stopped_by=s["stopped_by"],
    )
    return dataset, config, state, payload.get("pending")


def resume_run(checkpoint_path, test: Dataset, annotator, run_dir=None) -> RunResult:
    """Continue a paused run from its checkpoint; the result is bit-identical
    to the uninterrupted run."""
    dataset, config, state, pending = load_checkpoint(checkpoint_path)
    run_dir = Path(run_dir) if run_dir is not None else None
    if pending is not None:
        k = pending["iteration"]
        scores = [MisannotationScore(i, s) for i, s in pending["scores"].items()]
        requests = [AnnotationRequest.from_dict(r) for r in pending["requests"]]
        _finish_iteration(dataset, test, annotator, config, state, k,
                          pending["auto_corrected"], scores, pending["flagged"],
                          requests, run_dir)
        metric = clf.primary_metric_name(dataset.label_space.task_kind)
        state.stopped_by = _check_stop(state.records[-1], config, state, metric)
    return run_until_stop(dataset, test, annotator, config, run_dir=run_dir, state=state)
