"""Synthetic label-noise injectors and the class-imbalance diagnostic.

Three injectors with increasing realism: uniform random flips, flips drawn
from a model-estimated label-transition matrix, and flips drawn from each
example's own predicted distribution (which concentrates errors near decision
boundaries, the closest analogue to LLM annotation noise). All injectors
corrupt a clean dataset, change exactly ``round(fraction * n)`` labels, and
are byte-for-byte deterministic under a seed.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .classifier import ClassifierModel, build_text_matrix
from .data import DataError, Dataset, TaskKind


class NoiseKind(str, Enum):
    RANDOM = "random"
    LABEL_CONDITIONAL = "label_conditional"
    INPUT_CONDITIONAL = "input_conditional"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction < 1.0:
            raise DataError(f"noise fraction {self.fraction} outside [0, 1)")


@dataclass(frozen=True)
class TransitionMatrix:
    """Row i = distribution of assigned labels for examples whose label is class i."""

    classes: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.shape != (len(self.classes), len(self.classes)):
            raise DataError("transition matrix shape must match class count")
        if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
            raise DataError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise DataError("transition matrix rows must sum to 1")

    def row(self, class_name: str) -> np.ndarray:
        return self.matrix[self.classes.index(class_name)]


def round_half_away(x: float) -> int:
    """Round with halves away from zero (so 0.5 -> 1), not banker's rounding."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _check_clean_classification(dataset: Dataset, op: str) -> None:
    if dataset.label_space.task_kind is not TaskKind.CLASSIFICATION:
        raise DataError(f"{op} supports classification datasets only")
    for ex in dataset.examples:
        if ex.ground_truth is None:
            raise DataError(f"{op} requires ground truth on every example ({ex.id})")
        if ex.current_label != ex.ground_truth:
            raise DataError(f"{op} corrupts clean labels; example {ex.id} is already noisy")


def _target_count(dataset: Dataset, spec: NoiseSpec) -> int:
    target = round_half_away(spec.fraction * len(dataset))
    if target == 0 and spec.fraction > 0:
        warnings.warn(
            f"noise fraction {spec.fraction} rounds to zero examples on |d|={len(dataset)}; no-op"
        )
    return target


def _corrupt(dataset: Dataset, new_labels: dict[str, str]) -> tuple[Dataset, list[str]]:
    """Copy the dataset applying new labels as the ingested (original) ones."""
    noised = dataset.copy()
    for ex in noised.examples:
        if ex.id in new_labels:
            ex.original_label = new_labels[ex.id]
            ex.current_label = new_labels[ex.id]
    corrupted = [ex.id for ex in noised.examples if ex.id in new_labels]
    return noised, corrupted


def inject_random_noise(dataset: Dataset, spec: NoiseSpec) -> tuple[Dataset, list[str]]:
    """Flip round(fraction*n) uniformly chosen examples to a uniformly chosen
    different label."""
    _check_clean_classification(dataset, "inject_random_noise")
    target = _target_count(dataset, spec)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if target == 0:
        return dataset.copy(), []
    classes = dataset.label_space.classes
    chosen = rng.choice(len(dataset), size=target, replace=False)
    new_labels = {}
    for pos in chosen:
        ex = dataset.examples[int(pos)]
        others = [c for c in classes if c != ex.ground_truth]
        new_labels[ex.id] = others[int(rng.integers(len(others)))]
    return _corrupt(dataset, new_labels)


def estimate_transition_matrix(model: ClassifierModel, dataset: Dataset) -> TransitionMatrix:
    """Per-class mean of the model's output distribution over examples carrying
    that label; classes with no examples get an identity row."""
    if dataset.label_space.task_kind is not TaskKind.CLASSIFICATION:
        raise DataError("transition matrices are defined for classification tasks")
    classes = dataset.label_space.classes
    X = build_text_matrix([ex.input for ex in dataset.examples], model.config.dimension)
    P = model.predict_proba_matrix(X)
    matrix = np.eye(len(classes))
    label_idx = np.array([dataset.label_space.index_of(ex.current_label) for ex in dataset.examples])
    for c in range(len(classes)):
        mask = label_idx == c
        if mask.any():
            matrix[c] = P[mask].mean(axis=0)
    return TransitionMatrix(classes, matrix)


def inject_label_conditional(dataset: Dataset, spec: NoiseSpec,
                             matrix: TransitionMatrix) -> tuple[Dataset, list[str]]:
    """Flip uniformly chosen examples to a label sampled from their true-label
    transition row, diagonal zeroed and renormalized so the label changes.

    An all-diagonal row cannot produce a flip: the candidate is skipped with a
    warning and a replacement is drawn. Raises if the target count is
    unreachable.
    """
    _check_clean_classification(dataset, "inject_label_conditional")
    classes = dataset.label_space.classes
    if tuple(matrix.classes) != classes:
        raise DataError("transition matrix classes do not match the dataset label space")
    target = _target_count(dataset, spec)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if target == 0:
        return dataset.copy(), []

    new_labels: dict[str, str] = {}
    order = rng.permutation(len(dataset))
    for pos in order:
        if len(new_labels) == target:
            break
        ex = dataset.examples[int(pos)]
        c = dataset.label_space.index_of(ex.ground_truth)
        off = matrix.matrix[c].copy()
        off[c] = 0.0
        mass = off.sum()
        if mass <= 0.0:
            warnings.warn(f"transition row for {classes[c]!r} allows no flip; skipping {ex.id}")
            continue
        draw = int(rng.choice(len(classes), p=off / mass))
        new_labels[ex.id] = classes[draw]
    if len(new_labels) < target:
        raise DataError(
            f"label-conditional noise unreachable: corrupted {len(new_labels)} of {target}"
        )
    return _corrupt(dataset, new_labels)


def inject_input_conditional(dataset: Dataset, spec: NoiseSpec, model: ClassifierModel,
                             max_passes: int = 50) -> tuple[Dataset, list[str]]:
    """Resample labels from each example's own predicted distribution until the
    target count has changed.

    Sweeps seeded random permutations of the still-unchanged examples; a draw
    equal to the current label leaves the example unchanged, so an example
    flips with probability proportional to 1 - p(current | input) per sweep and
    its new label is distributed proportionally to p(other | input).
    """
    _check_clean_classification(dataset, "inject_input_conditional")
    target = _target_count(dataset, spec)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if target == 0:
        return dataset.copy(), []
    classes = dataset.label_space.classes
    X = build_text_matrix([ex.input for ex in dataset.examples], model.config.dimension)
    P = model.predict_proba_matrix(X)

    new_labels: dict[str, str] = {}
    for _ in range(max_passes):
        order = rng.permutation(len(dataset))
        for pos in order:
            ex = dataset.examples[int(pos)]
            if ex.id in new_labels:
                continue
            draw = int(rng.choice(len(classes), p=P[int(pos)]))
            if classes[draw] != ex.current_label:
                new_labels[ex.id] = classes[draw]
                if len(new_labels) == target:
                    break
        if len(new_labels) == target:
            break
    if len(new_labels) < target:
        raise DataError(
            "input-conditional noise did not reach the target in "
            f"{max_passes} passes: achieved fraction {len(new_labels) / len(dataset):.4f} "
            f"of requested {spec.fraction:.4f}"
        )
    return _corrupt(dataset, new_labels)


def inject_noise(dataset: Dataset, spec: NoiseSpec,
                 model: ClassifierModel | None = None,
                 matrix: TransitionMatrix | None = None) -> tuple[Dataset, list[str]]:
    """Dispatch on spec.kind; label-conditional estimates its matrix from the
    supplied model when none is given."""
    if spec.kind is NoiseKind.RANDOM:
        return inject_random_noise(dataset, spec)
    if spec.kind is NoiseKind.LABEL_CONDITIONAL:
        if matrix is None:
            if model is None:
                raise DataError("label-conditional noise needs a model or a transition matrix")
            matrix = estimate_transition_matrix(model, dataset)
        return inject_label_conditional(dataset, spec, matrix)
    if model is None:
        raise DataError("input-conditional noise needs a trained model")
    return inject_input_conditional(dataset, spec, model)


def class_imbalance_kl(noised_dist, reference_dist) -> float:
    """KL divergence (natural log) of the noised label distribution from the
    reference one: sum p * ln(p/q) with 0*ln(0/q) = 0."""
    if isinstance(noised_dist, dict) or isinstance(reference_dist, dict):
        if set(noised_dist) != set(reference_dist):
            raise DataError("distributions must cover the same classes")
        keys = list(reference_dist)
        p = np.array([noised_dist[k] for k in keys], dtype=float)
        q = np.array([reference_dist[k] for k in keys], dtype=float)
    else:
        p = np.asarray(noised_dist, dtype=float)
        q = np.asarray(reference_dist, dtype=float)
        if p.shape != q.shape:
            raise DataError("distributions must cover the same classes")
    if np.any(p < 0) or np.any(q < 0):
        raise DataError("distribution entries must be non-negative")
    support = p > 0
    if np.any(q[support] <= 0):
        raise DataError("reference distribution is zero where the noised one has mass")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def write_noise_sidecar(path, dataset: Dataset, spec: NoiseSpec,
                        corrupted_ids: list[str]) -> Path:
    """Provenance sidecar required for reproducing injections."""
    sidecar = {
        "kind": spec.kind.value,
        "fraction": spec.fraction,
        "seed": spec.seed,
        "dataset": dataset.name,
        "dataset_size": len(dataset),
        "corrupted_count": len(corrupted_ids),
        "achieved_fraction": len(corrupted_ids) / len(dataset) if len(dataset) else 0.0,
        "corrupted_ids": corrupted_ids,
    }
    path = Path(path)
    path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return path
