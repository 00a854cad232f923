"""
The built-in classifier and misannotation scores
================================================

Train the hashed-feature logistic regression on noisy labels and rank
examples by how likely their label is wrong: m = 1 - p(label | input).
The wrongest-looking examples are the annotator's best use of time.
"""

import numpy as np

from alc3 import TrainConfig, evaluate, train, training_view
from alc3.engine import misannotation_scores
from alc3.noise import NoiseKind, NoiseSpec, inject_random_noise
from alc3.synthetic import make_classification_dataset

clean = make_classification_dataset(600, n_classes=4, seed=0)
noisy, corrupted = inject_random_noise(clean, NoiseSpec(NoiseKind.RANDOM, 0.25, seed=2))
test = make_classification_dataset(300, n_classes=4, seed=7, id_prefix="te")

config = TrainConfig(dimension=2 ** 14, epochs=6, batch_size=64, seed=3)
model = train(training_view(noisy), noisy.label_space, config)
print("model on clean test data:", evaluate(model, [(e.input, e.ground_truth) for e in test]))

scores = misannotation_scores(model, noisy)
ranked = sorted(scores, key=lambda s: -s.score)
corrupted_set = set(corrupted)

for top in (25, 50, 150):
    hits = sum(1 for s in ranked[:top] if s.example_id in corrupted_set)
    print(f"top {top:>3} by misannotation score: {hits} truly corrupted "
          f"({hits / top:.0%} precision)")

base_rate = len(corrupted_set) / len(noisy)
print(f"random flagging would find about {base_rate:.0%}")

# scores are probabilities' complements, so they live in [0, 1]
values = np.array([s.score for s in scores])
print(f"score range: [{values.min():.3f}, {values.max():.3f}], mean {values.mean():.3f}")
