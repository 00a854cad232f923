import json

import pytest

from alc3.data import (
    DataError, Dataset, Example, LabelSpace, Source, TaskKind,
    apply_annotation, dataset_stats, from_state_dict, load_dataset,
    reset_ephemeral, save_dataset, to_state_dict, training_view,
)
from conftest import tiny_dataset, two_class_space, write_jsonl

ATIS_STYLE = LabelSpace.for_classification(
    ("airfare", "aircraft", "flight", "ground_service"))


def test_load_jsonl_three_records(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [
        {"id": "a", "input": "book a flight", "label": "flight", "ground_truth": "flight"},
        {"id": "b", "input": "fares to boston", "label": "airfare", "ground_truth": None},
        {"id": "c", "input": "what planes fly", "label": "aircraft", "ground_truth": "aircraft"},
    ])
    d = load_dataset(path, ATIS_STYLE)
    assert len(d) == 3
    assert all(ex.source is Source.ORIGINAL and not ex.filtered for ex in d)
    assert all(ex.current_label == ex.original_label for ex in d)


def test_load_rejects_multi_label_value(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [
        {"id": "a", "input": "cheap flight fares", "label": "airfare+flight",
         "ground_truth": None},
    ])
    with pytest.raises(DataError, match="unknown label"):
        load_dataset(path, ATIS_STYLE)


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(DataError, match="empty dataset"):
        load_dataset(path, ATIS_STYLE)


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "input": "x", "label": "flight"}\n{oops\n')
    with pytest.raises(DataError, match="line 2"):
        load_dataset(path, ATIS_STYLE)


def test_load_duplicate_id(tmp_path):
    path = tmp_path / "dup.jsonl"
    write_jsonl(path, [
        {"id": "a", "input": "x", "label": "flight"},
        {"id": "a", "input": "y", "label": "airfare"},
    ])
    with pytest.raises(DataError, match="duplicate id"):
        load_dataset(path, ATIS_STYLE)


def test_csv_roundtrip_classification(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("id,input,label,ground_truth\n"
                    "a,book a flight,flight,flight\n"
                    "b,fares please,airfare,\n")
    d = load_dataset(path, ATIS_STYLE, fmt="csv")
    assert len(d) == 2
    assert d.get("b").ground_truth is None


def test_csv_rejected_for_sequences(tmp_path):
    space = LabelSpace.for_sequence_labeling(("O", "ENT"))
    path = tmp_path / "d.csv"
    path.write_text("id,input,label,ground_truth\n")
    with pytest.raises(DataError, match="classification only"):
        load_dataset(path, space, fmt="csv")


def test_sequence_label_length_checked(tmp_path):
    space = LabelSpace.for_sequence_labeling(("O", "ENT"))
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [
        {"id": "a", "input": ["two", "tokens"], "label": ["O"], "ground_truth": None},
    ])
    with pytest.raises(DataError, match="label length"):
        load_dataset(path, space)


def test_training_view_identity():
    d = tiny_dataset(10)
    assert len(training_view(d)) == 10


def test_training_view_excludes_filtered():
    # 10-record fixture with e2, e5, e7 filtered: by hand, the remaining
    # pairs are e0,e1,e3,e4,e6,e8,e9 in dataset order.
    d = tiny_dataset(10)
    for i in (2, 5, 7):
        d.get(f"e{i}").filtered = True
    view = training_view(d)
    assert len(view) == 7
    remaining_inputs = [inp for inp, _ in view]
    assert remaining_inputs == [f"text number {i}" for i in (0, 1, 3, 4, 6, 8, 9)]


def test_training_view_carries_corrected_label():
    d = tiny_dataset(4)
    ex = d.get("e1")
    ex.current_label = "neg"
    ex.source = Source.AUTO_CORRECTED
    view = training_view(d)
    assert view[1] == ("text number 1", "neg")


def test_training_view_all_filtered_errors():
    d = tiny_dataset(3)
    for ex in d:
        ex.filtered = True
    with pytest.raises(DataError, match="filtered"):
        training_view(d)


def _mixed_state_dataset():
    # 11 examples: 5 auto-corrected, 4 filtered (one of them also
    # auto-corrected), 2 human-annotated.
    d = tiny_dataset(11)
    for i in (0, 1, 2, 3, 4):
        ex = d.get(f"e{i}")
        ex.current_label = "neg" if ex.current_label == "pos" else "pos"
        ex.source = Source.AUTO_CORRECTED
    for i in (4, 5, 6, 7):
        d.get(f"e{i}").filtered = True
    for i in (9, 10):
        apply_annotation(d, f"e{i}", "pos")
    return d


def test_reset_ephemeral_counts_and_spares_humans():
    d = _mixed_state_dataset()
    # touched: 5 auto-corrected + 3 only-filtered (e4 counted once) = 8
    assert reset_ephemeral(d) == 8
    for ex in d:
        assert not ex.filtered
        if ex.source is Source.HUMAN:
            assert ex.current_label == "pos"
        else:
            assert ex.source is Source.ORIGINAL
            assert ex.current_label == ex.original_label


def test_reset_ephemeral_idempotent():
    d = _mixed_state_dataset()
    reset_ephemeral(d)
    assert reset_ephemeral(d) == 0


def test_reset_noop_on_pristine_dataset():
    d = tiny_dataset(6)
    assert reset_ephemeral(d) == 0


def test_reset_counts_dual_state_once():
    d = tiny_dataset(1)
    ex = d.get("e0")
    ex.current_label = "pos"
    ex.source = Source.AUTO_CORRECTED
    ex.filtered = True
    assert reset_ephemeral(d) == 1
    assert ex.source is Source.ORIGINAL and not ex.filtered
    assert ex.current_label == ex.original_label


def test_apply_annotation_promotes():
    d = tiny_dataset(4)
    ex = apply_annotation(d, "e0", "pos")
    assert ex.source is Source.HUMAN and ex.current_label == "pos" and not ex.filtered


def test_apply_annotation_confirmation_still_promotes():
    d = tiny_dataset(4)
    current = d.get("e2").current_label
    ex = apply_annotation(d, "e2", current)
    assert ex.source is Source.HUMAN


def test_apply_annotation_clears_filter():
    d = tiny_dataset(4)
    d.get("e1").filtered = True
    ex = apply_annotation(d, "e1", "neg")
    assert not ex.filtered and ex.source is Source.HUMAN


def test_apply_annotation_errors():
    d = tiny_dataset(4)
    with pytest.raises(DataError, match="unknown example id"):
        apply_annotation(d, "nope", "pos")
    with pytest.raises(DataError, match="unknown label"):
        apply_annotation(d, "e0", "maybe")
    apply_annotation(d, "e0", "pos")
    with pytest.raises(DataError, match="already human-annotated"):
        apply_annotation(d, "e0", "neg")
    ex = apply_annotation(d, "e0", "neg", override=True)
    assert ex.current_label == "neg"


def test_dataset_stats_noise_fraction():
    # 1000 records, 298 carrying a wrong label: fraction is exactly 0.298
    noisy = {f"e{i}" for i in range(298)}
    d = tiny_dataset(1000, noisy_ids=noisy)
    stats = dataset_stats(d)
    assert stats["noise_fraction"] == pytest.approx(0.298, abs=1e-12)
    assert stats["size"] == 1000


def test_dataset_stats_clean():
    stats = dataset_stats(tiny_dataset(50))
    assert stats["noise_fraction"] == 0.0
    assert sum(stats["label_distribution"].values()) == 50


def test_dataset_stats_sequence_fractions():
    # 1000 sentences of 10 tokens: 574 sentences contain wrong tokens
    # (396 with two wrong, 178 with one wrong) -> 970 wrong of 10000 tokens.
    space = LabelSpace.for_sequence_labeling(("O", "ENT"))
    examples = []
    for i in range(1000):
        tokens = tuple(f"w{i}_{j}" for j in range(10))
        gt = tuple("O" for _ in range(10))
        label = list(gt)
        if i < 396:
            label[0] = label[1] = "ENT"
        elif i < 574:
            label[0] = "ENT"
        examples.append(Example(f"s{i}", tokens, tuple(label), tuple(label), ground_truth=gt))
    d = Dataset("seq", space, examples)
    stats = dataset_stats(d)
    assert stats["sentence_noise_fraction"] == pytest.approx(0.574, abs=1e-12)
    assert stats["token_noise_fraction"] == pytest.approx(0.097, abs=1e-12)


def test_save_load_roundtrip_pristine(tmp_path):
    d = tiny_dataset(20, noisy_ids={"e3", "e8"})
    path = tmp_path / "round.jsonl"
    save_dataset(d, path)
    again = load_dataset(path, d.label_space, name=d.name)
    assert to_state_dict(again) == to_state_dict(d)
    # pristine datasets round-trip through the minimal 4-key schema
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"id", "input", "label", "ground_truth"}


def test_save_load_roundtrip_with_state(tmp_path):
    d = _mixed_state_dataset()
    path = tmp_path / "state.jsonl"
    save_dataset(d, path)
    again = load_dataset(path, d.label_space, name=d.name)
    assert to_state_dict(again) == to_state_dict(d)


def test_state_dict_roundtrip():
    d = _mixed_state_dataset()
    assert to_state_dict(from_state_dict(to_state_dict(d))) == to_state_dict(d)


def test_label_space_validation():
    with pytest.raises(DataError):
        LabelSpace.for_classification(("only",))
    with pytest.raises(DataError):
        LabelSpace.for_classification(("a", "a"))
    with pytest.raises(DataError):
        LabelSpace.for_sequence_labeling(("A", "B"))  # no outside tag
    space = LabelSpace.for_sequence_labeling(("O", "PER"))
    assert space.outside_tag == "O"


def test_bookkeeping_random_operation_sequences():
    # property: human labels survive any mix of data-level operations
    import numpy as np

    rng = np.random.Generator(np.random.PCG64(123))
    for _ in range(50):
        d = tiny_dataset(12, noisy_ids={"e1", "e4"})
        human: dict[str, str] = {}
        for _ in range(30):
            op = rng.integers(4)
            i = int(rng.integers(12))
            ex = d.get(f"e{i}")
            if op == 0 and ex.source is not Source.HUMAN:
                ex.filtered = True
            elif op == 1 and ex.source is not Source.HUMAN:
                ex.current_label = "pos" if ex.current_label == "neg" else "neg"
                ex.source = Source.AUTO_CORRECTED
            elif op == 2:
                label = ("neg", "pos")[int(rng.integers(2))]
                if ex.source is not Source.HUMAN:
                    apply_annotation(d, ex.id, label)
                    human[ex.id] = label
            else:
                reset_ephemeral(d)
            filtered = sum(1 for e in d if e.filtered)
            if filtered < len(d):
                assert len(training_view(d)) + filtered == len(d)
        for ex_id, label in human.items():
            assert d.get(ex_id).current_label == label
            assert d.get(ex_id).source is Source.HUMAN
            assert not d.get(ex_id).filtered
