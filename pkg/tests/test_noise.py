import json
import math
import time

import numpy as np
import pytest

from alc3 import classifier as clf
from alc3.data import DataError, Dataset, Example, LabelSpace
from alc3.noise import (
    NoiseKind, NoiseSpec, TransitionMatrix, class_imbalance_kl,
    estimate_transition_matrix, inject_input_conditional,
    inject_label_conditional, inject_random_noise, round_half_away,
    write_noise_sidecar,
)
from alc3.synthetic import make_classification_dataset, make_separable_dataset
from conftest import tiny_dataset, two_class_space


def constant_model(space: LabelSpace, probs, dimension: int = 64) -> clf.ClassifierModel:
    """Zero-weight model emitting the same distribution for every input."""
    bias = np.log(np.asarray(probs, dtype=float))
    weights = np.zeros((len(space.classes), dimension))
    return clf.ClassifierModel(space, clf.TrainConfig(dimension=dimension), weights, bias)


def test_round_half_away():
    assert round_half_away(0.5) == 1
    assert round_half_away(2.5) == 3
    assert round_half_away(0.49) == 0
    assert round_half_away(-0.5) == -1


def test_random_noise_zero_fraction():
    d = tiny_dataset(20)
    noised, ids = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.0, seed=1))
    assert ids == []
    assert [ex.current_label for ex in noised] == [ex.current_label for ex in d]


def test_random_noise_exact_count_and_divergence():
    d = tiny_dataset(100)
    noised, ids = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.3, seed=5))
    assert len(ids) == 30
    flipped = [ex for ex in noised if ex.id in set(ids)]
    assert all(ex.current_label != ex.ground_truth for ex in flipped)
    assert all(ex.original_label == ex.current_label for ex in noised)
    untouched = [ex for ex in noised if ex.id not in set(ids)]
    assert all(ex.current_label == ex.ground_truth for ex in untouched)


def test_random_noise_seed_determinism():
    d = tiny_dataset(100)
    _, ids1 = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.3, seed=5))
    _, ids2 = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.3, seed=5))
    _, ids3 = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.3, seed=6))
    assert ids1 == ids2
    assert ids1 != ids3


def test_random_noise_subone_target_warns_noop():
    d = tiny_dataset(10)
    with pytest.warns(UserWarning, match="rounds to zero"):
        noised, ids = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.04, seed=1))
    assert ids == []


def test_injectors_require_clean_dataset():
    d = tiny_dataset(10, noisy_ids={"e1"})
    with pytest.raises(DataError, match="already noisy"):
        inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.2, seed=1))
    d2 = tiny_dataset(10)
    d2.get("e0").ground_truth = None
    with pytest.raises(DataError, match="ground truth"):
        inject_random_noise(d2, NoiseSpec(NoiseKind.RANDOM, 0.2, seed=1))


# --- transition matrix -----------------------------------------------------

def test_transition_matrix_constant_model_rows():
    d = tiny_dataset(40)
    model = constant_model(d.label_space, (0.8, 0.2))
    tm = estimate_transition_matrix(model, d)
    assert np.allclose(tm.row("neg"), [0.8, 0.2], atol=1e-12)
    assert np.allclose(tm.row("pos"), [0.8, 0.2], atol=1e-12)


def test_transition_matrix_identity_limit():
    d = make_separable_dataset(60, 3, seed=2)
    cfg = clf.TrainConfig(dimension=2 ** 12, epochs=12, batch_size=16, seed=2,
                          learning_rate=0.5)
    model = clf.train([(ex.input, ex.ground_truth) for ex in d.examples], d.label_space, cfg)
    tm = estimate_transition_matrix(model, d)
    assert np.all(np.diag(tm.matrix) > 0.85)


def test_transition_matrix_rows_sum_to_one_and_empty_class_identity():
    d = tiny_dataset(10)
    space3 = LabelSpace.for_classification(("neg", "pos", "ghost"))
    examples = [Example(ex.id, ex.input, ex.current_label, ex.current_label, ex.ground_truth)
                for ex in d.examples]
    d3 = Dataset("t3", space3, examples)
    model = constant_model(space3, (0.5, 0.3, 0.2))
    tm = estimate_transition_matrix(model, d3)
    assert np.allclose(tm.matrix.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(tm.matrix[2], [0.0, 0.0, 1.0], atol=1e-12)  # no "ghost" examples


def test_transition_matrix_validation():
    with pytest.raises(DataError, match="sum to 1"):
        TransitionMatrix(("a", "b"), np.array([[0.9, 0.2], [0.5, 0.5]]))


# --- label-conditional -----------------------------------------------------

def test_label_conditional_identity_matrix_unreachable():
    d = tiny_dataset(20)
    tm = TransitionMatrix(d.label_space.classes, np.eye(2))
    with pytest.warns(UserWarning, match="allows no flip"):
        with pytest.raises(DataError, match="unreachable"):
            inject_label_conditional(d, NoiseSpec(NoiseKind.LABEL_CONDITIONAL, 0.2, 1), tm)


def test_label_conditional_forced_transition():
    d = tiny_dataset(30)
    tm = TransitionMatrix(d.label_space.classes, np.array([[0.0, 1.0], [0.4, 0.6]]))
    noised, ids = inject_label_conditional(d, NoiseSpec(NoiseKind.LABEL_CONDITIONAL, 0.3, 2), tm)
    for ex in noised:
        if ex.id in set(ids) and ex.ground_truth == "neg":
            assert ex.current_label == "pos"


def test_label_conditional_monte_carlo_frequencies():
    # 20k examples at fraction 0.5 -> 10,000 draws; empirical flip rates must
    # match the diagonal-zeroed, renormalized rows within +/-0.02
    space = LabelSpace.for_classification(("a", "b", "c"))
    examples = [Example(f"e{i}", f"t {i}", space.classes[i % 3], space.classes[i % 3],
                        ground_truth=space.classes[i % 3]) for i in range(20000)]
    d = Dataset("mc", space, examples)
    matrix = np.array([
        [0.5, 0.4, 0.1],
        [0.2, 0.6, 0.2],
        [0.3, 0.3, 0.4],
    ])
    tm = TransitionMatrix(space.classes, matrix)
    noised, ids = inject_label_conditional(d, NoiseSpec(NoiseKind.LABEL_CONDITIONAL, 0.5, 3), tm)
    assert len(ids) == 10000
    flipped = {ex.id: ex for ex in noised.examples if ex.id in set(ids)}
    for c, cls in enumerate(space.classes):
        row = matrix[c].copy()
        row[c] = 0.0
        row /= row.sum()
        members = [ex for ex in flipped.values() if ex.ground_truth == cls]
        for j, target in enumerate(space.classes):
            if j == c:
                continue
            freq = sum(1 for ex in members if ex.current_label == target) / len(members)
            assert abs(freq - row[j]) < 0.02, (cls, target, freq, row[j])


# --- input-conditional -----------------------------------------------------

def test_input_conditional_zero_fraction():
    d = tiny_dataset(20)
    model = constant_model(d.label_space, (0.6, 0.4))
    noised, ids = inject_input_conditional(d, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.0, 1), model)
    assert ids == []


def test_input_conditional_exact_count_and_determinism():
    d = tiny_dataset(200)
    model = constant_model(d.label_space, (0.6, 0.4))
    spec = NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.25, seed=4)
    noised1, ids1 = inject_input_conditional(d, spec, model)
    noised2, ids2 = inject_input_conditional(d, spec, model)
    assert len(ids1) == 50
    assert ids1 == ids2
    assert [ex.current_label for ex in noised1] == [ex.current_label for ex in noised2]
    assert all(noised1.get(i).current_label != noised1.get(i).ground_truth for i in ids1)


def test_input_conditional_concentrates_on_uncertain_examples():
    # two clusters of distinct vocabulary plus an ambiguous boundary band;
    # a model trained on the clusters is uncertain exactly on the band
    space = two_class_space()
    examples = []
    for i in range(400):
        if i < 150:
            text, gt = f"alpha{i % 20} alpha{(i + 7) % 20}", "neg"
        elif i < 300:
            text, gt = f"beta{i % 20} beta{(i + 3) % 20}", "pos"
        else:
            # identical boundary texts recur with conflicting labels, so the
            # model cannot be confident on them
            text, gt = f"alpha{i % 20} beta{i % 20}", ("neg", "pos")[(i // 20) % 2]
        examples.append(Example(f"e{i}", text, gt, gt, ground_truth=gt))
    d = Dataset("bnd", space, examples)
    cfg = clf.TrainConfig(dimension=2 ** 12, epochs=15, batch_size=32, seed=1,
                          learning_rate=0.5)
    model = clf.train([(ex.input, ex.ground_truth) for ex in d.examples], space, cfg)

    boundary_ids = {f"e{i}" for i in range(300, 400)}
    base_rate = len(boundary_ids) / len(d)
    rates = []
    for seed in range(20):
        _, ids = inject_input_conditional(d, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.2, seed), model)
        rates.append(sum(1 for i in ids if i in boundary_ids) / len(ids))
    assert np.mean(rates) >= 2 * base_rate


def test_input_conditional_unreachable_reports_achieved():
    # a near-deterministic model almost never samples a different label
    d = tiny_dataset(50)
    model = constant_model(d.label_space, (1 - 1e-9, 1e-9))
    half_neg = sum(1 for ex in d.examples if ex.ground_truth == "neg")
    assert half_neg == 25
    with pytest.raises(DataError, match="achieved fraction"):
        inject_input_conditional(d, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.9, 1), model,
                                 max_passes=5)


# --- KL diagnostic ----------------------------------------------------------

def test_kl_identiy_zero():
    assert class_imbalance_kl([0.25, 0.75], [0.25, 0.75]) == 0.0


def test_kl_hand_value():
    expected = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
    assert class_imbalance_kl([0.9, 0.1], [0.5, 0.5]) == pytest.approx(expected, abs=1e-12)
    assert class_imbalance_kl([0.9, 0.1], [0.5, 0.5]) == pytest.approx(0.3680642071684971,
                                                                       abs=1e-12)


def test_kl_nonnegative_random_pairs():
    rng = np.random.Generator(np.random.PCG64(9))
    for _ in range(100):
        p = rng.dirichlet(np.ones(5))
        q = rng.dirichlet(np.ones(5)) + 1e-9
        q /= q.sum()
        assert class_imbalance_kl(p, q) >= -1e-12


def test_kl_support_violation():
    with pytest.raises(DataError, match="zero where"):
        class_imbalance_kl([0.5, 0.5], [1.0, 0.0])


def test_kl_dict_inputs():
    assert class_imbalance_kl({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}) == 0.0
    with pytest.raises(DataError, match="same classes"):
        class_imbalance_kl({"a": 1.0}, {"b": 1.0})


def test_kl_zero_mass_term_dropped():
    assert class_imbalance_kl([0.0, 1.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)


# --- sidecar and 1000-record performance ------------------------------------

def test_sidecar_fields(tmp_path):
    d = tiny_dataset(100)
    spec = NoiseSpec(NoiseKind.RANDOM, 0.3, seed=5)
    noised, ids = inject_random_noise(d, spec)
    path = write_noise_sidecar(tmp_path / "noise.provenance.json", noised, spec, ids)
    sidecar = json.loads(path.read_text())
    assert sidecar["kind"] == "random"
    assert sidecar["corrupted_count"] == 30
    assert sidecar["achieved_fraction"] == pytest.approx(0.3)
    assert sidecar["corrupted_ids"] == ids
    assert sidecar["seed"] == 5


def test_all_injectors_thousand_records_under_a_minute():
    start = time.time()
    d = make_classification_dataset(1000, 4, seed=10, name="k")
    cfg = clf.TrainConfig(dimension=2 ** 12, epochs=4, batch_size=64, seed=10)
    model = clf.train([(ex.input, ex.ground_truth) for ex in d.examples], d.label_space, cfg)
    tm = estimate_transition_matrix(model, d)

    _, r_ids = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.3, 1))
    _, l_ids = inject_label_conditional(d, NoiseSpec(NoiseKind.LABEL_CONDITIONAL, 0.3, 1), tm)
    _, i_ids = inject_input_conditional(d, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.3, 1), model)
    assert len(r_ids) == len(l_ids) == len(i_ids) == 300

    _, r2 = inject_random_noise(d, NoiseSpec(NoiseKind.RANDOM, 0.3, 1))
    _, l2 = inject_label_conditional(d, NoiseSpec(NoiseKind.LABEL_CONDITIONAL, 0.3, 1), tm)
    _, i2 = inject_input_conditional(d, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.3, 1), model)
    assert (r_ids, l_ids, i_ids) == (r2, l2, i2)
    assert time.time() - start < 60
