"""alc3: iterative label correction for noisy datasets.

Train a probabilistic classifier on noisy labels, auto-correct confident
contradictions, route the most suspect examples to an annotator, filter the
rest, repeat until the cleaned data trains a model close to oracle quality.
"""

from .annotator import (
    AnnotationQueue, AnnotationRequest, AnnotationResponse,
    OracleAnnotator, QueueAnnotator, ReplayAnnotator,
    oracle_annotate, replay_annotate,
)
from .classifier import (
    ClassifierModel, FeatureVector, TrainConfig,
    evaluate, featurize, load_model, save_model, sequence_label_prob, train,
)
from .data import (
    DataError, Dataset, Example, LabelSpace, Source, TaskKind,
    apply_annotation, dataset_stats, load_dataset, reset_ephemeral,
    save_dataset, training_view,
)
from .engine import (
    BudgetCap, CloseToOracle, EngineConfig, EngineState, IterationRecord,
    MisannotationScore, MpPrecisionFloor, RunResult, Strategy,
    auto_correct, compute_eta, compute_mp_precision, filter_examples,
    flag_for_annotation, misannotation_scores, resume_run, run_iteration,
    run_until_stop,
)
from .noise import (
    NoiseKind, NoiseSpec, TransitionMatrix, class_imbalance_kl,
    estimate_transition_matrix, inject_input_conditional,
    inject_label_conditional, inject_noise, inject_random_noise,
)

__version__ = "0.1.0"
