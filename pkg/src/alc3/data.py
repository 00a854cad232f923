"""Dataset model: examples, label provenance, ingestion and per-iteration resets.

Labels carry a provenance ``source`` (original / auto-corrected / human) plus an
orthogonal ``filtered`` flag. Human labels are permanent; auto-corrections and
filter marks are ephemeral and are reverted by :func:`reset_ephemeral` at the
start of every correction iteration.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class DataError(ValueError):
    """Malformed records, unknown labels, bookkeeping violations."""


class TaskKind(str, Enum):
    CLASSIFICATION = "classification"
    SEQUENCE_LABELING = "sequence_labeling"


class Source(str, Enum):
    ORIGINAL = "original"
    AUTO_CORRECTED = "auto_corrected"
    HUMAN = "human"


Label = str | tuple[str, ...]
Input = str | tuple[str, ...]


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label vocabulary for a task.

    ``classes`` is populated for classification, ``entity_tags`` for sequence
    labeling (token tagging). Exactly one of the two is non-empty.
    """

    task_kind: TaskKind
    classes: tuple[str, ...] = ()
    entity_tags: tuple[str, ...] = ()
    outside_tag: str = "O"

    def __post_init__(self):
        names = self.labels
        if len(set(names)) != len(names) or any(not n for n in names):
            raise DataError("label names must be unique and non-empty")
        if self.task_kind is TaskKind.CLASSIFICATION:
            if len(self.classes) < 2:
                raise DataError("classification needs at least 2 classes")
            if self.entity_tags:
                raise DataError("classification space must not define entity tags")
        else:
            if len(self.entity_tags) < 2:
                raise DataError("sequence labeling needs at least 2 tags")
            if self.outside_tag not in self.entity_tags:
                raise DataError(f"outside tag {self.outside_tag!r} missing from entity tags")
            if self.classes:
                raise DataError("sequence space must not define classes")

    @staticmethod
    def for_classification(classes) -> "LabelSpace":
        return LabelSpace(TaskKind.CLASSIFICATION, classes=tuple(classes))

    @staticmethod
    def for_sequence_labeling(tags, outside_tag: str = "O") -> "LabelSpace":
        return LabelSpace(TaskKind.SEQUENCE_LABELING, entity_tags=tuple(tags), outside_tag=outside_tag)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.classes if self.task_kind is TaskKind.CLASSIFICATION else self.entity_tags

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"unknown label {label!r}") from None

    def contains(self, value: Label) -> bool:
        if self.task_kind is TaskKind.CLASSIFICATION:
            return isinstance(value, str) and value in self.classes
        return (
            isinstance(value, tuple)
            and len(value) > 0
            and all(tag in self.entity_tags for tag in value)
        )


@dataclass
class Example:
    """One dataset record with its label history.

    ``original_label`` is the annotation as ingested (the noisy one);
    ``current_label`` is the live value after corrections.
    """

    id: str
    input: Input
    original_label: Label
    current_label: Label
    ground_truth: Label | None = None
    source: Source = Source.ORIGINAL
    filtered: bool = False

    @property
    def tokens(self) -> tuple[str, ...]:
        if not isinstance(self.input, tuple):
            raise DataError(f"example {self.id} is not a token sequence")
        return self.input


@dataclass
class Dataset:
    name: str
    label_space: LabelSpace
    examples: list[Example] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._reindex()

    def _reindex(self):
        self._index = {}
        for pos, ex in enumerate(self.examples):
            if ex.id in self._index:
                raise DataError(f"duplicate example id {ex.id!r}")
            self._index[ex.id] = pos

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def get(self, example_id: str) -> Example:
        try:
            return self.examples[self._index[example_id]]
        except KeyError:
            raise DataError(f"unknown example id {example_id!r}") from None

    def has_ground_truth(self) -> bool:
        return all(ex.ground_truth is not None for ex in self.examples)

    def copy(self) -> "Dataset":
        return from_state_dict(to_state_dict(self))


def _check_label_value(value: Label, space: LabelSpace, where: str,
                       input_value: Input | None = None) -> Label:
    if space.task_kind is TaskKind.CLASSIFICATION:
        if not isinstance(value, str) or value not in space.classes:
            raise DataError(f"{where}: unknown label {value!r}")
        return value
    if not isinstance(value, tuple):
        raise DataError(f"{where}: sequence label must be a list of tags")
    for tag in value:
        if tag not in space.entity_tags:
            raise DataError(f"{where}: unknown label {tag!r}")
    if input_value is not None and len(value) != len(input_value):
        raise DataError(
            f"{where}: label length {len(value)} != token count {len(input_value)}"
        )
    return value


def _coerce(value, name: str, line: int):
    """JSON value -> Input/Label: strings stay, lists become tuples."""
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        if not all(isinstance(v, str) for v in value):
            raise DataError(f"line {line}: {name} list must contain only strings")
        return tuple(value)
    raise DataError(f"line {line}: {name} must be a string or list of strings")


def load_dataset(path, label_space: LabelSpace, fmt: str = "jsonl",
                 name: str | None = None) -> Dataset:
    """Read a JSONL or CSV file into a Dataset of source=Original examples.

    JSONL records: ``{"id", "input", "label", "ground_truth"}`` with optional
    state-extension keys (``original_label``, ``source``, ``filtered``) as
    written by :func:`save_dataset` for corrected datasets. CSV is accepted for
    classification only, header ``id,input,label,ground_truth``.
    """
    path = Path(path)
    fmt = fmt.lower()
    if fmt == "jsonl":
        records = _read_jsonl(path)
    elif fmt == "csv":
        if label_space.task_kind is not TaskKind.CLASSIFICATION:
            raise DataError("CSV ingestion supports classification only")
        records = _read_csv(path)
    else:
        raise DataError(f"unknown format {fmt!r}")

    examples = []
    seen = set()
    for line, rec in records:
        where = f"line {line}"
        if not isinstance(rec.get("id"), str) or not rec["id"]:
            raise DataError(f"{where}: missing or invalid id")
        if rec["id"] in seen:
            raise DataError(f"{where}: duplicate id {rec['id']!r}")
        seen.add(rec["id"])
        if "input" not in rec or "label" not in rec:
            raise DataError(f"{where}: record needs 'input' and 'label'")
        inp = _coerce(rec["input"], "input", line)
        current = _check_label_value(_coerce(rec["label"], "label", line), label_space, where, inp)
        gt = rec.get("ground_truth")
        if gt is not None:
            gt = _check_label_value(_coerce(gt, "ground_truth", line), label_space, where, inp)
        source = Source(rec["source"]) if "source" in rec else Source.ORIGINAL
        original = current
        if "original_label" in rec:
            original = _check_label_value(
                _coerce(rec["original_label"], "original_label", line), label_space, where, inp)
        if source is Source.ORIGINAL and original != current:
            raise DataError(f"{where}: original example with diverging current label")
        filtered = bool(rec.get("filtered", False))
        if source is Source.HUMAN and filtered:
            raise DataError(f"{where}: human-annotated example cannot be filtered")
        examples.append(Example(rec["id"], inp, original, current, gt, source, filtered))

    if not examples:
        raise DataError(f"empty dataset: {path}")
    return Dataset(name or path.stem, label_space, examples)


def _read_jsonl(path: Path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as err:
                raise DataError(f"line {line}: malformed JSON ({err.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"line {line}: record must be an object")
            out.append((line, rec))
    return out


def _read_csv(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        expected = ["id", "input", "label", "ground_truth"]
        if list(reader.fieldnames) != expected:
            raise DataError(f"CSV header must be {','.join(expected)}")
        out = []
        for line, row in enumerate(reader, start=2):
            rec = {"id": row["id"], "input": row["input"], "label": row["label"],
                   "ground_truth": row["ground_truth"] or None}
            out.append((line, rec))
    return out


def save_dataset(dataset: Dataset, path) -> None:
    """Write JSONL in the ingestion schema; provenance keys are added only for
    examples that have diverged from the plain Original state, so a freshly
    loaded dataset round-trips to the minimal 4-key schema."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            rec = {
                "id": ex.id,
                "input": list(ex.input) if isinstance(ex.input, tuple) else ex.input,
                "label": list(ex.current_label) if isinstance(ex.current_label, tuple) else ex.current_label,
                "ground_truth": (list(ex.ground_truth) if isinstance(ex.ground_truth, tuple)
                                 else ex.ground_truth),
            }
            if ex.source is not Source.ORIGINAL or ex.filtered:
                rec["source"] = ex.source.value
                rec["filtered"] = ex.filtered
                rec["original_label"] = (list(ex.original_label)
                                         if isinstance(ex.original_label, tuple) else ex.original_label)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def training_view(dataset: Dataset) -> list[tuple[Input, Label]]:
    """(input, current_label) pairs for all unfiltered examples, dataset order."""
    view = [(ex.input, ex.current_label) for ex in dataset.examples if not ex.filtered]
    if not view:
        raise DataError("all examples are filtered; training view is empty")
    return view


def reset_ephemeral(dataset: Dataset) -> int:
    """Revert auto-corrections and clear filter marks; returns examples touched.

    Human-annotated labels are left untouched. Idempotent: a second call
    returns 0.
    """
    changed = 0
    for ex in dataset.examples:
        touched = False
        if ex.source is Source.AUTO_CORRECTED:
            ex.current_label = ex.original_label
            ex.source = Source.ORIGINAL
            touched = True
        if ex.filtered:
            ex.filtered = False
            touched = True
        if touched:
            changed += 1
    return changed


def apply_annotation(dataset: Dataset, example_id: str, label: Label,
                     override: bool = False) -> Example:
    """Record a human label: sets current_label, promotes to source=Human,
    clears any filter mark. Re-annotating a human label requires ``override``.

    Confirming the existing label still promotes the example; confirmation is
    information and promotion prevents re-flagging.
    """
    ex = dataset.get(example_id)
    if ex.source is Source.HUMAN and not override:
        raise DataError(f"example {example_id!r} already human-annotated (use override)")
    if isinstance(label, list):
        label = tuple(label)
    _check_label_value(label, dataset.label_space, f"example {example_id}", ex.input)
    ex.current_label = label
    ex.source = Source.HUMAN
    ex.filtered = False
    return ex


def dataset_stats(dataset: Dataset) -> dict:
    """Size, current-label distribution, and noise fractions vs ground truth.

    Noise is reported only when every example carries ground truth; sequence
    tasks additionally get a token-level fraction next to the sentence-level
    one (a sentence counts as noisy if any token is wrong).
    """
    stats: dict = {"size": len(dataset), "name": dataset.name,
                   "task_kind": dataset.label_space.task_kind.value}
    if dataset.label_space.task_kind is TaskKind.CLASSIFICATION:
        dist = Counter(ex.current_label for ex in dataset.examples)
    else:
        dist = Counter(tag for ex in dataset.examples for tag in ex.current_label)
    stats["label_distribution"] = {label: dist.get(label, 0) for label in dataset.label_space.labels}

    if dataset.has_ground_truth() and len(dataset) > 0:
        wrong = sum(1 for ex in dataset.examples if ex.current_label != ex.ground_truth)
        stats["noise_fraction"] = wrong / len(dataset)
        if dataset.label_space.task_kind is TaskKind.SEQUENCE_LABELING:
            total_tokens = sum(len(ex.current_label) for ex in dataset.examples)
            wrong_tokens = sum(
                sum(1 for a, b in zip(ex.current_label, ex.ground_truth) if a != b)
                for ex in dataset.examples
            )
            stats["sentence_noise_fraction"] = stats.pop("noise_fraction")
            stats["token_noise_fraction"] = wrong_tokens / total_tokens if total_tokens else 0.0
    return stats


def label_distribution(dataset: Dataset, normalize: bool = True,
                       use_ground_truth: bool = False) -> dict[str, float]:
    """Current-label (or ground-truth) class frequencies; classification only."""
    if dataset.label_space.task_kind is not TaskKind.CLASSIFICATION:
        raise DataError("label_distribution is defined for classification tasks")
    counts = Counter(
        (ex.ground_truth if use_ground_truth else ex.current_label) for ex in dataset.examples
    )
    total = len(dataset) if normalize else 1
    return {c: counts.get(c, 0) / total for c in dataset.label_space.classes}


def to_state_dict(dataset: Dataset) -> dict:
    """Full JSON-serializable snapshot, inverse of :func:`from_state_dict`."""
    space = dataset.label_space
    return {
        "name": dataset.name,
        "label_space": {
            "task_kind": space.task_kind.value,
            "classes": list(space.classes),
            "entity_tags": list(space.entity_tags),
            "outside_tag": space.outside_tag,
        },
        "examples": [
            {
                "id": ex.id,
                "input": list(ex.input) if isinstance(ex.input, tuple) else ex.input,
                "original_label": (list(ex.original_label)
                                   if isinstance(ex.original_label, tuple) else ex.original_label),
                "current_label": (list(ex.current_label)
                                  if isinstance(ex.current_label, tuple) else ex.current_label),
                "ground_truth": (list(ex.ground_truth)
                                 if isinstance(ex.ground_truth, tuple) else ex.ground_truth),
                "source": ex.source.value,
                "filtered": ex.filtered,
            }
            for ex in dataset.examples
        ],
    }


def from_state_dict(state: dict) -> Dataset:
    ls = state["label_space"]
    space = LabelSpace(
        TaskKind(ls["task_kind"]),
        classes=tuple(ls["classes"]),
        entity_tags=tuple(ls["entity_tags"]),
        outside_tag=ls.get("outside_tag", "O"),
    )

    def _val(v):
        return tuple(v) if isinstance(v, list) else v

    examples = [
        Example(
            id=rec["id"],
            input=_val(rec["input"]),
            original_label=_val(rec["original_label"]),
            current_label=_val(rec["current_label"]),
            ground_truth=_val(rec["ground_truth"]),
            source=Source(rec["source"]),
            filtered=rec["filtered"],
        )
        for rec in state["examples"]
    ]
    return Dataset(state["name"], space, examples)
