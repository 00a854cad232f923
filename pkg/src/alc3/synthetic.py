"""Seeded synthetic datasets for experiments, demos, and the test suite.

The classification generator produces bag-of-words "utterances" whose class
vocabularies overlap through shared confusion pools between adjacent classes,
so a linear model is good but not perfect and its mistakes concentrate near
class boundaries. That structure is what makes input-conditional noise
meaningfully harder than uniform noise at desk scale.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Example, LabelSpace


def make_classification_dataset(
    n: int,
    n_classes: int = 8,
    seed: int = 0,
    words_per_example: tuple[int, int] = (6, 12),
    class_vocab: int = 20,
    confusion_vocab: int = 12,
    common_vocab: int = 30,
    p_class: float = 0.5,
    p_confusion: float = 0.3,
    name: str = "synthetic",
    id_prefix: str = "ex",
) -> Dataset:
    """Clean dataset (label = ground truth) with near-balanced classes.

    Each word is drawn from the example's own class vocabulary with
    probability ``p_class``, from a confusion pool shared with an adjacent
    class with ``p_confusion``, and from a class-agnostic common pool
    otherwise.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    classes = tuple(f"class_{c}" for c in range(n_classes))
    space = LabelSpace.for_classification(classes)

    class_words = [[f"c{c}w{j}" for j in range(class_vocab)] for c in range(n_classes)]
    confusion_words = {}
    for c in range(n_classes):
        a, b = sorted((c, (c + 1) % n_classes))
        confusion_words[(a, b)] = [f"x{a}_{b}w{j}" for j in range(confusion_vocab)]
    common_words = [f"gw{j}" for j in range(common_vocab)]

    labels = np.array([i % n_classes for i in range(n)])
    rng.shuffle(labels)

    lo, hi = words_per_example
    examples = []
    for i in range(n):
        c = int(labels[i])
        left = tuple(sorted((c, (c - 1) % n_classes)))
        right = tuple(sorted((c, (c + 1) % n_classes)))
        length = int(rng.integers(lo, hi + 1))
        words = []
        for _ in range(length):
            u = rng.random()
            if u < p_class:
                pool = class_words[c]
            elif u < p_class + p_confusion:
                pool = confusion_words[left if rng.random() < 0.5 else right]
            else:
                pool = common_words
            words.append(pool[int(rng.integers(len(pool)))])
        text = " ".join(words)
        examples.append(Example(f"{id_prefix}{i:05d}", text, classes[c], classes[c],
                                ground_truth=classes[c]))
    return Dataset(name, space, examples)


def make_separable_dataset(n: int, n_classes: int = 2, seed: int = 0,
                           name: str = "separable") -> Dataset:
    """Trivially separable fixture: disjoint class vocabularies, no overlap."""
    return make_classification_dataset(
        n, n_classes=n_classes, seed=seed, p_class=1.0, p_confusion=0.0,
        common_vocab=1, name=name,
    )


def make_sequence_dataset(
    n: int,
    seed: int = 0,
    tokens_per_sentence: tuple[int, int] = (4, 10),
    entity_fraction: float = 0.3,
    vocab: int = 40,
    name: str = "synthetic_seq",
    id_prefix: str = "sq",
) -> Dataset:
    """Clean token-tagging dataset over tags (O, PER, LOC).

    Person/location surface forms are distinct words, so per-token
    classification is learnable from the token identity alone; context
    features only sharpen it.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    space = LabelSpace.for_sequence_labeling(("O", "PER", "LOC"))
    persons = [f"per{j}" for j in range(vocab)]
    locations = [f"loc{j}" for j in range(vocab)]
    plain = [f"word{j}" for j in range(vocab * 2)]

    lo, hi = tokens_per_sentence
    examples = []
    for i in range(n):
        length = int(rng.integers(lo, hi + 1))
        tokens, tags = [], []
        for _ in range(length):
            u = rng.random()
            if u < entity_fraction / 2:
                tokens.append(persons[int(rng.integers(len(persons)))])
                tags.append("PER")
            elif u < entity_fraction:
                tokens.append(locations[int(rng.integers(len(locations)))])
                tags.append("LOC")
            else:
                tokens.append(plain[int(rng.integers(len(plain)))])
                tags.append("O")
        examples.append(Example(f"{id_prefix}{i:05d}", tuple(tokens), tuple(tags),
                                tuple(tags), ground_truth=tuple(tags)))
    return Dataset(name, space, examples)
