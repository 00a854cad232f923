"""
Three synthetic noise models
============================

Uniform random flips, label-conditional flips drawn from a transition matrix,
and input-conditional flips sampled from a model's own predictions. The last
concentrates errors near decision boundaries and consistently damages a
trained model the most, while keeping a similar class imbalance.
"""

import numpy as np

from alc3 import TrainConfig, evaluate, train, training_view
from alc3.data import label_distribution
from alc3.noise import (
    NoiseKind, NoiseSpec, class_imbalance_kl, estimate_transition_matrix,
    inject_input_conditional, inject_label_conditional, inject_random_noise,
)
from alc3.synthetic import make_classification_dataset

FRACTION = 0.30
clean = make_classification_dataset(1500, n_classes=6, seed=0,
                                    words_per_example=(3, 6), p_class=0.35,
                                    p_confusion=0.45)
test = make_classification_dataset(500, n_classes=6, seed=9, id_prefix="te",
                                   words_per_example=(3, 6), p_class=0.35,
                                   p_confusion=0.45)
test_items = [(e.input, e.ground_truth) for e in test.examples]

config = TrainConfig(dimension=2 ** 14, epochs=6, batch_size=64, seed=1)
helper = train([(e.input, e.ground_truth) for e in clean.examples], clean.label_space, config)
matrix = estimate_transition_matrix(helper, clean)
print("transition matrix diagonal:", np.round(np.diag(matrix.matrix), 2))

reference = label_distribution(clean)
for name, (noised, ids) in {
    "random": inject_random_noise(clean, NoiseSpec(NoiseKind.RANDOM, FRACTION, 1)),
    "label-conditional": inject_label_conditional(
        clean, NoiseSpec(NoiseKind.LABEL_CONDITIONAL, FRACTION, 1), matrix),
    "input-conditional": inject_input_conditional(
        clean, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, FRACTION, 1), helper),
}.items():
    model = train(training_view(noised), noised.label_space, config)
    acc = evaluate(model, test_items)["accuracy"]
    kl = class_imbalance_kl(label_distribution(noised), reference)
    print(f"{name:>18}: {len(ids)} flips, trained accuracy {acc:.3f}, "
          f"class-imbalance KL {kl:.4f}")
