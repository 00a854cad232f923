"""Shared fixtures and the calibrated experiment configurations.

The two synthetic corpora below were calibrated once and frozen: the severity
fixture (short, heavily overlapping texts + a sharp injection model) makes
input-conditional noise clearly more damaging than random flips, while the
correction fixture (longer texts + a weak subset-trained injection model)
keeps the noise findable so the iterative loop exhibits the intended strategy
ordering at desk scale.
"""

from __future__ import annotations

import json

import pytest

from alc3 import classifier as clf
from alc3.data import Dataset, Example, LabelSpace, Source
from alc3.synthetic import make_classification_dataset

# shared classifier config for all calibrated experiments
ACCEPT_TRAIN = dict(dimension=2 ** 15, epochs=8, batch_size=128)

# noise-severity comparison (Table-2 analogue)
SEVERITY_FIXTURE = dict(words_per_example=(3, 6), p_class=0.30, p_confusion=0.50,
                        class_vocab=12, confusion_vocab=18, common_vocab=50)

# correction-loop experiments (budget claim, MP trends, precision decay)
CORRECTION_FIXTURE = dict(words_per_example=(4, 8), p_class=0.40, p_confusion=0.40,
                          class_vocab=14, confusion_vocab=14, common_vocab=40)
CORRECTION_INJECT = dict(dimension=2 ** 11, epochs=4, batch_size=128, l2=3e-4)
CORRECTION_INJECT_SUBSET = 2000
NOISE_FRACTION = 0.30

# fast settings for unit-level engine runs
FAST_TRAIN = dict(dimension=2 ** 12, epochs=3, batch_size=64)


def two_class_space() -> LabelSpace:
    return LabelSpace.for_classification(("neg", "pos"))


def tiny_dataset(n: int = 10, noisy_ids=(), space: LabelSpace | None = None,
                 name: str = "tiny") -> Dataset:
    """Hand-enumerable classification fixture; ``noisy_ids`` get a wrong label."""
    space = space or two_class_space()
    classes = space.classes
    examples = []
    for i in range(n):
        gt = classes[i % len(classes)]
        wrong = classes[(i + 1) % len(classes)]
        label = wrong if f"e{i}" in noisy_ids else gt
        examples.append(Example(f"e{i}", f"text number {i}", label, label, ground_truth=gt))
    return Dataset(name, space, examples)


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


@pytest.fixture(scope="session")
def correction_corpus():
    """Train/test pair plus the weak injection model for loop experiments."""
    train = make_classification_dataset(5000, 8, seed=42, name="train", **CORRECTION_FIXTURE)
    test = make_classification_dataset(1500, 8, seed=43, name="test", id_prefix="te",
                                       **CORRECTION_FIXTURE)
    gt_view = [(ex.input, ex.ground_truth) for ex in train.examples]
    inject_model = clf.train(gt_view[:CORRECTION_INJECT_SUBSET], train.label_space,
                             clf.TrainConfig(seed=7, **CORRECTION_INJECT))
    return train, test, inject_model


@pytest.fixture(scope="session")
def severity_corpus():
    """Train/test pair plus the sharp injection model for the severity test."""
    train = make_classification_dataset(5000, 8, seed=42, name="train", **SEVERITY_FIXTURE)
    test = make_classification_dataset(1500, 8, seed=43, name="test", id_prefix="te",
                                       **SEVERITY_FIXTURE)
    gt_view = [(ex.input, ex.ground_truth) for ex in train.examples]
    inject_model = clf.train(gt_view, train.label_space,
                             clf.TrainConfig(seed=7, **ACCEPT_TRAIN))
    return train, test, inject_model
