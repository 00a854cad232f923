"""
Datasets, provenance, and bookkeeping
=====================================

Build a small synthetic intent-classification dataset, corrupt a third of it,
and walk the label-provenance operations the correction loop relies on.
"""

from alc3 import apply_annotation, dataset_stats, reset_ephemeral, training_view
from alc3.data import Source
from alc3.noise import NoiseKind, NoiseSpec, inject_random_noise
from alc3.synthetic import make_classification_dataset

# a clean dataset: ground truth equals the current label
clean = make_classification_dataset(200, n_classes=4, seed=0, name="demo")
print("clean stats:", dataset_stats(clean))

# corrupt 30% of the labels uniformly at random
noisy, corrupted = inject_random_noise(clean, NoiseSpec(NoiseKind.RANDOM, 0.30, seed=1))
print(f"\ncorrupted {len(corrupted)} labels; first few ids: {corrupted[:5]}")
print("noisy stats:", dataset_stats(noisy))

# the training view is what a model sees: (input, current_label) pairs
view = training_view(noisy)
print(f"\ntraining view holds {len(view)} pairs; first: {view[0]}")

# a human annotation is permanent; auto-corrections and filter marks are not
ex = noisy.examples[0]
apply_annotation(noisy, ex.id, ex.ground_truth)
noisy.examples[1].source = Source.AUTO_CORRECTED
noisy.examples[1].current_label = ex.ground_truth
noisy.examples[2].filtered = True

reverted = reset_ephemeral(noisy)
print(f"\nreset reverted {reverted} ephemeral changes;"
      f" human label survived: {noisy.examples[0].source}")
