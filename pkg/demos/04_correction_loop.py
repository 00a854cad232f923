"""
The iterative correction loop
=============================

Run the full pipeline with a simulated (ground-truth) annotator and compare
the informed strategy against random flagging, under input-conditional noise
(the kind that actually hurts). Each iteration: reset the previous round's
ephemeral changes, auto-correct confident contradictions, flag the most
suspicious examples for annotation, filter residual suspects, retrain, and
evaluate against a held-out test set.
"""

from alc3 import OracleAnnotator, TrainConfig, train
from alc3.engine import CloseToOracle, EngineConfig, Strategy, run_until_stop
from alc3.noise import NoiseKind, NoiseSpec, inject_input_conditional
from alc3.synthetic import make_classification_dataset

GEN = dict(words_per_example=(4, 8), p_class=0.40, p_confusion=0.40,
           class_vocab=14, confusion_vocab=14, common_vocab=40)
clean = make_classification_dataset(2000, n_classes=8, seed=0, **GEN)
test_clean = make_classification_dataset(800, n_classes=8, seed=11, id_prefix="te", **GEN)

# a weak, deliberately under-trained model supplies the noise distribution
weak = train([(e.input, e.ground_truth) for e in clean.examples[:800]], clean.label_space,
             TrainConfig(dimension=2 ** 11, epochs=4, batch_size=128, l2=3e-4, seed=7))
noisy, _ = inject_input_conditional(clean, NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.30, 1), weak)
noisy_test, _ = inject_input_conditional(test_clean,
                                         NoiseSpec(NoiseKind.INPUT_CONDITIONAL, 0.30, 2), weak)

for strategy in (Strategy.ALC3, Strategy.RLC):
    dataset = noisy.copy()
    config = EngineConfig(
        strategy=strategy, M=0.05, delta=0.75, max_iterations=15, seed=1,
        stop_rules=(CloseToOracle(band=0.01),),
        train=TrainConfig(dimension=2 ** 14, epochs=6, batch_size=128, seed=1),
    )
    result = run_until_stop(dataset, noisy_test, OracleAnnotator(dataset), config)
    stopped = result.stopped_by or "iteration budget exhausted"
    print(f"\n{strategy.value}: {stopped} after {len(result.records)} iteration(s), "
          f"oracle reference {result.state.oracle_value:.3f}")
    print(" it  flag corr auto filt  p_MP   eta_k  annotated  accuracy")
    for r in result.records:
        print(f" {r.iteration:>2}  {r.m_flag:>4} {r.m_corr:>4} {r.auto_corrected:>4} "
              f"{r.m_filter:>4}  {r.p_mp:.2f}  {r.eta_k:+.3f}  {r.cumulative_annotated_fraction:.3f}"
              f"      {r.eval['accuracy']:.3f}")
