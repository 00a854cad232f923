"""
Run artifacts, replay, and report bundles
=========================================

Every run with an artifacts directory leaves behind per-iteration records,
flag lists with model predictions, an annotation transcript, a checkpoint,
and history.csv. The transcript replays a run bit-identically, and a report
bundle turns the artifacts into plot-ready CSVs plus a markdown summary.
"""

import tempfile
from pathlib import Path

from alc3 import OracleAnnotator, ReplayAnnotator, TrainConfig
from alc3.engine import EngineConfig, Strategy, run_until_stop
from alc3.noise import NoiseKind, NoiseSpec, inject_random_noise
from alc3.report import emit_report
from alc3.synthetic import make_classification_dataset

clean = make_classification_dataset(400, n_classes=4, seed=0)
noisy, _ = inject_random_noise(clean, NoiseSpec(NoiseKind.RANDOM, 0.2, seed=5))
test = make_classification_dataset(200, n_classes=4, seed=6, id_prefix="te")
config = EngineConfig(strategy=Strategy.ALC3, M=0.05, delta=0.75, max_iterations=3,
                      seed=2, train=TrainConfig(dimension=2 ** 13, epochs=4, seed=2))

workdir = Path(tempfile.mkdtemp(prefix="alc3_demo_"))
record_dir, replay_dir = workdir / "recorded", workdir / "replayed"

d1 = noisy.copy()
run_until_stop(d1, test, OracleAnnotator(d1), config, run_dir=record_dir)
print("artifacts:", sorted(p.name for p in record_dir.iterdir()))

d2 = noisy.copy()
run_until_stop(d2, test, ReplayAnnotator(record_dir / "annotations.jsonl"),
               config, run_dir=replay_dir)
identical = (record_dir / "history.csv").read_bytes() == (replay_dir / "history.csv").read_bytes()
print("replayed history.csv byte-identical:", identical)

paths = emit_report(record_dir, workdir / "report")
print("report bundle:")
for name, path in paths.items():
    print(f"  {name}: {path}")
print("\nsummary preview:\n")
print((workdir / "report" / "report.md").read_text()[:600])
