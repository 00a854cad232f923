import json

import numpy as np
import pytest

from alc3 import classifier as clf
from alc3.data import DataError
from alc3.engine import EngineConfig, IterationRecord, Strategy
from alc3.noise import NoiseKind, NoiseSpec, inject_random_noise
from alc3.report import (
    MpEvaluation, data_size_sweep, emit_report, mp_precision_recall, sweep_M,
)
from alc3.synthetic import make_classification_dataset
from conftest import FAST_TRAIN, tiny_dataset


def sweep_config(seed=1):
    return EngineConfig(strategy=Strategy.ALC, M=0.05, delta=0.75, seed=seed,
                        train=clf.TrainConfig(seed=seed, **FAST_TRAIN))


def test_mp_precision_recall_exact_match():
    d = tiny_dataset(20, noisy_ids={"e1", "e5", "e9"})
    ev = mp_precision_recall(["e1", "e5", "e9"], d)
    assert ev.precision == 1.0 and ev.recall == 1.0 and not ev.vacuous_recall


def test_mp_precision_recall_hand_counts():
    # flagged 10, 6 truly misannotated, 30 misannotated total
    noisy = {f"e{i}" for i in range(30)}
    d = tiny_dataset(100, noisy_ids=noisy)
    flagged = [f"e{i}" for i in range(6)] + [f"e{i}" for i in range(90, 94)]
    ev = mp_precision_recall(flagged, d)
    assert ev.precision == pytest.approx(0.6, abs=1e-12)
    assert ev.recall == pytest.approx(0.2, abs=1e-12)
    # counts are integers by construction
    assert (ev.precision * len(flagged)) == pytest.approx(round(ev.precision * len(flagged)))
    assert (ev.recall * 30) == pytest.approx(round(ev.recall * 30))


def test_mp_precision_recall_vacuous():
    d = tiny_dataset(10)
    ev = mp_precision_recall(["e0"], d)
    assert ev.recall == 1.0 and ev.vacuous_recall


def test_mp_precision_recall_requires_ground_truth():
    d = tiny_dataset(5)
    d.get("e0").ground_truth = None
    with pytest.raises(DataError, match="ground truth"):
        mp_precision_recall(["e1"], d)


@pytest.fixture(scope="module")
def sweep_corpus():
    clean = make_classification_dataset(400, 4, seed=21, name="sw",
                                        words_per_example=(4, 8), p_class=0.6,
                                        p_confusion=0.3)
    noisy, _ = inject_random_noise(clean, NoiseSpec(NoiseKind.RANDOM, 0.25, seed=21))
    return noisy


def test_sweep_m_rejects_bad_M(sweep_corpus):
    with pytest.raises(DataError, match="M must"):
        sweep_M(sweep_corpus, [Strategy.ALC], [1.0], sweep_config())


def test_sweep_m_shape_and_determinism(sweep_corpus, tmp_path):
    strategies = [Strategy.RLC, Strategy.ALC, Strategy.DALC]
    rows1 = sweep_M(sweep_corpus, strategies, [0.05, 0.1], sweep_config(),
                    out_csv=tmp_path / "m1.csv")
    rows2 = sweep_M(sweep_corpus, strategies, [0.05, 0.1], sweep_config(),
                    out_csv=tmp_path / "m2.csv")
    assert len(rows1) == 6
    assert rows1 == rows2
    assert (tmp_path / "m1.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()


def test_sweep_m_alc_beats_rlc(sweep_corpus):
    rows = sweep_M(sweep_corpus, [Strategy.RLC, Strategy.ALC], [0.05], sweep_config())
    by_strategy = {r.strategy: r for r in rows}
    assert by_strategy[Strategy.ALC].precision > by_strategy[Strategy.RLC].precision


def test_data_size_sweep_consistency_with_sweep_m(sweep_corpus):
    cfg = sweep_config()
    [(frac, precision)] = data_size_sweep(sweep_corpus, [1.0], cfg, M=0.05)
    [alc_row] = sweep_M(sweep_corpus, [Strategy.ALC], [0.05], cfg)
    assert frac == 1.0
    assert precision == pytest.approx(alc_row.precision, abs=1e-12)


def test_data_size_sweep_dedup_and_bounds(sweep_corpus):
    with pytest.warns(UserWarning, match="duplicate"):
        rows = data_size_sweep(sweep_corpus, [1.0, 1.0], sweep_config(), M=0.05)
    assert len(rows) == 1
    with pytest.raises(DataError, match="need >= 2"):
        data_size_sweep(sweep_corpus, [0.01], sweep_config(), M=0.05)


def _write_fake_run(run_dir, n_iterations=9, stopped_by="close_to_oracle"):
    run_dir.mkdir(parents=True, exist_ok=True)
    for k in range(1, n_iterations + 1):
        record = IterationRecord(
            iteration=k, m_flag=5, m_corr=max(0, 4 - k // 3), auto_corrected=k % 2,
            m_filter=3 * max(0, 4 - k // 3), p_mp=max(0.0, 0.8 - 0.08 * k),
            eta_k=0.3 - 0.02 * k,
            eval={"accuracy": 0.9 + 0.005 * k, "macro_f1": 0.89 + 0.005 * k},
            cumulative_annotated_fraction=0.025 * k,
        )
        (run_dir / f"iteration_{k}.json").write_text(json.dumps(record.to_dict()))
    (run_dir / "manifest.json").write_text(json.dumps({
        "config": {"strategy": "ALC3", "M": 0.025, "delta": 0.75, "seed": 1},
        "dataset": {"path": "train.jsonl", "sha256": "ab" * 32},
        "stopped_by": stopped_by,
    }))


def test_emit_report_bundle(tmp_path):
    run_dir = tmp_path / "run"
    _write_fake_run(run_dir)
    paths = emit_report(run_dir, tmp_path / "out")
    history = (tmp_path / "out" / "history.csv").read_text().splitlines()
    assert len(history) == 10  # header + 9 rows
    assert history[0].startswith("iteration,m_flag,m_corr")
    summary = paths["summary"].read_text()
    assert "close_to_oracle" in summary
    assert "accuracy=0.9450" in summary
    perf = (tmp_path / "out" / "performance_vs_budget.csv").read_text().splitlines()
    assert perf[0] == "cumulative_annotated_fraction,accuracy,macro_f1"
    assert len(perf) == 10


def test_emit_report_regeneration_byte_identical(tmp_path):
    run_dir = tmp_path / "run"
    _write_fake_run(run_dir, n_iterations=4)
    emit_report(run_dir, tmp_path / "o1")
    emit_report(run_dir, tmp_path / "o2")
    for name in ("history.csv", "report.md", "performance_vs_budget.csv",
                 "pmp_vs_iteration.csv"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()


def test_emit_report_missing_artifacts(tmp_path):
    with pytest.raises(DataError, match="no iteration records"):
        emit_report(tmp_path / "nothing")
