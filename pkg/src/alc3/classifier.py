"""Built-in probabilistic classifier: hashed-feature multinomial logistic regression.

Every downstream formula consumes only per-class probabilities, so any model
exposing ``predict_proba`` can be plugged in; this one is dependency-light and
deterministic. Text is featurized with a stable hash (BLAKE2b, 8-byte digest)
over lowercase alphanumeric tokens and adjacent-token bigrams, so feature
indices are identical across runs and platforms. Sequence tasks get an
independent per-token classifier over a +/-2 context window.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, asdict
from hashlib import blake2b
from pathlib import Path

import numpy as np
from scipy import sparse

from .data import DataError, Input, Label, LabelSpace, TaskKind

MODEL_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# featurization memo: (dimension, text) -> (indices, counts); bounded, cleared when full
_FEATURE_CACHE: dict = {}
_FEATURE_CACHE_MAX = 1_000_000


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults are desk-scale and overridable."""

    dimension: int = 2 ** 18
    epochs: int = 10
    learning_rate: float = 0.1
    lr_decay: float = 0.9          # per-epoch multiplicative decay
    l2: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    context_window: int = 2        # sequence tasks only

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


def stable_hash(key: str) -> int:
    """Platform-stable 64-bit hash of a UTF-8 string (BLAKE2b, 8-byte digest)."""
    return int.from_bytes(blake2b(key.encode("utf-8"), digest_size=8).digest(), "big")


def _hashed_counts(keys, dimension: int) -> dict[int, float]:
    counts: dict[int, float] = {}
    for key in keys:
        idx = stable_hash(key) % dimension
        counts[idx] = counts.get(idx, 0.0) + 1.0
    return counts


@dataclass(frozen=True)
class FeatureVector:
    dimension: int
    entries: dict[int, float]

    def __post_init__(self):
        for idx, w in self.entries.items():
            if not 0 <= idx < self.dimension:
                raise DataError(f"feature index {idx} outside [0, {self.dimension})")
            if not math.isfinite(w):
                raise DataError("feature weights must be finite")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def featurize(text: str, dimension: int) -> FeatureVector:
    """Hashed bag of unigrams and adjacent bigrams.

    Keys are ``u:<token>`` and ``b:<left>\\x1f<right>``, hashed with
    :func:`stable_hash` modulo ``dimension``; counts accumulate on collisions.
    Empty text yields a zero vector.
    """
    if dimension < 2:
        raise DataError("feature dimension must be >= 2")
    tokens = tokenize(text)
    keys = [f"u:{t}" for t in tokens]
    keys += [f"b:{a}\x1f{b}" for a, b in zip(tokens, tokens[1:])]
    return FeatureVector(dimension, _hashed_counts(keys, dimension))


def token_context_features(tokens, position: int, window: int) -> list[str]:
    """Feature keys for one token: itself, neighbors in +/-window, and the
    two adjacent-pair conjunctions."""
    L = len(tokens)

    def at(i):
        return tokens[i].lower() if 0 <= i < L else ("<s>" if i < 0 else "</s>")

    keys = [f"w0:{at(position)}"]
    for off in range(1, window + 1):
        keys.append(f"w-{off}:{at(position - off)}")
        keys.append(f"w+{off}:{at(position + off)}")
    keys.append(f"p-:{at(position - 1)}\x1f{at(position)}")
    keys.append(f"p+:{at(position)}\x1f{at(position + 1)}")
    return keys


def _text_feature_entries(text: str, dimension: int):
    memo_key = (dimension, text)
    hit = _FEATURE_CACHE.get(memo_key)
    if hit is None:
        fv = featurize(text, dimension)
        items = sorted(fv.entries.items())
        hit = (
            np.array([i for i, _ in items], dtype=np.int64),
            np.array([v for _, v in items], dtype=np.float64),
        )
        if len(_FEATURE_CACHE) >= _FEATURE_CACHE_MAX:
            _FEATURE_CACHE.clear()
        _FEATURE_CACHE[memo_key] = hit
    return hit


def _token_feature_entries(tokens: tuple[str, ...], position: int, dimension: int, window: int):
    memo_key = (dimension, window, tokens, position)
    hit = _FEATURE_CACHE.get(memo_key)
    if hit is None:
        keys = token_context_features(tokens, position, window)
        counts = _hashed_counts(keys, dimension)
        items = sorted(counts.items())
        hit = (
            np.array([i for i, _ in items], dtype=np.int64),
            np.array([v for _, v in items], dtype=np.float64),
        )
        if len(_FEATURE_CACHE) >= _FEATURE_CACHE_MAX:
            _FEATURE_CACHE.clear()
        _FEATURE_CACHE[memo_key] = hit
    return hit


def _rows_to_csr(rows, dimension: int) -> sparse.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, (idx, _) in enumerate(rows):
        indptr[i + 1] = indptr[i] + len(idx)
    nnz = int(indptr[-1])
    indices = np.empty(nnz, dtype=np.int64)
    values = np.empty(nnz, dtype=np.float64)
    for i, (idx, val) in enumerate(rows):
        indices[indptr[i]:indptr[i + 1]] = idx
        values[indptr[i]:indptr[i + 1]] = val
    return sparse.csr_matrix((values, indices, indptr), shape=(len(rows), dimension))


def build_text_matrix(texts, dimension: int) -> sparse.csr_matrix:
    return _rows_to_csr([_text_feature_entries(t, dimension) for t in texts], dimension)


def build_token_matrix(sentences, dimension: int, window: int) -> sparse.csr_matrix:
    rows = [
        _token_feature_entries(tuple(tokens), j, dimension, window)
        for tokens in sentences
        for j in range(len(tokens))
    ]
    return _rows_to_csr(rows, dimension)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(params: np.ndarray, X: sparse.csr_matrix, y: np.ndarray,
                  l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus 0.5*l2*||W||^2 and its gradient.

    ``params`` is (n_classes, dimension + 1) with the bias in the last column;
    the bias is excluded from the penalty.
    """
    W, b = params[:, :-1], params[:, -1]
    n = X.shape[0]
    scores = X @ W.T + b
    P = _softmax(scores)
    eps = 1e-300
    ce = -np.mean(np.log(P[np.arange(n), y] + eps))
    loss = ce + 0.5 * l2 * float((W * W).sum())
    P = P.copy()
    P[np.arange(n), y] -= 1.0
    P /= n
    gradW = (X.T @ P).T + l2 * W
    gradB = P.sum(axis=0)
    return loss, np.hstack([gradW, gradB[:, None]])


def _fit_core(X: sparse.csr_matrix, y: np.ndarray, n_classes: int,
              config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded mini-batch gradient descent with L2 weight decay.

    The decay is applied through a running scale factor so each step touches
    only the batch's active feature columns; identical seeds give identical
    weights.
    """
    n, d = X.shape
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    scale = 1.0
    rng = np.random.Generator(np.random.PCG64(config.seed))
    for epoch in range(config.epochs):
        lr = config.learning_rate * (config.lr_decay ** epoch)
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb = X[idx]
            B = len(idx)
            scores = (Xb @ W.T) * scale + b
            P = _softmax(scores)
            P[np.arange(B), y[idx]] -= 1.0
            P /= B
            scale *= 1.0 - lr * config.l2
            coo = Xb.tocoo()
            if coo.nnz:
                active, inv = np.unique(coo.col, return_inverse=True)
                grad = np.zeros((len(active), n_classes))
                np.add.at(grad, inv, coo.data[:, None] * P[coo.row])
                W[:, active] -= (lr / scale) * grad.T
            b -= lr * P.sum(axis=0)
    return W * scale, b


@dataclass
class ClassifierModel:
    """Trained multinomial logistic regression over hashed features.

    Immutable once trained; safe to share across threads for prediction.
    Distributions sum to 1 within 1e-9 and argmax ties break toward the
    lowest class index.
    """

    label_space: LabelSpace
    config: TrainConfig
    weights: np.ndarray      # (n_classes, dimension)
    bias: np.ndarray         # (n_classes,)

    @property
    def classes(self) -> tuple[str, ...]:
        return self.label_space.labels

    def predict_proba(self, x: Input) -> np.ndarray:
        """Class distribution for one input; for sequence tasks, one
        distribution per token (shape (n_tokens, n_classes))."""
        if self.label_space.task_kind is TaskKind.CLASSIFICATION:
            if not isinstance(x, str):
                raise DataError("classification input must be a string")
            X = build_text_matrix([x], self.config.dimension)
            return self.predict_proba_matrix(X)[0]
        tokens = tuple(x)
        if not tokens:
            raise DataError("sequence input must contain at least one token")
        X = build_token_matrix([tokens], self.config.dimension, self.config.context_window)
        return self.predict_proba_matrix(X)

    def predict_proba_matrix(self, X: sparse.csr_matrix) -> np.ndarray:
        return _softmax(X @ self.weights.T + self.bias)

    def predict(self, x: Input):
        probs = self.predict_proba(x)
        if self.label_space.task_kind is TaskKind.CLASSIFICATION:
            return self.classes[int(np.argmax(probs))]
        return tuple(self.classes[int(i)] for i in np.argmax(probs, axis=1))

    def label_probability(self, x: Input, label: Label) -> float:
        """p(label | x); for sequences the geometric mean over tokens of the
        per-token probability of the given tag."""
        probs = self.predict_proba(x)
        if self.label_space.task_kind is TaskKind.CLASSIFICATION:
            return float(probs[self.label_space.index_of(label)])
        if len(label) != len(x):
            raise DataError("sequence label length must match token count")
        per_token = [float(probs[j, self.label_space.index_of(tag)]) for j, tag in enumerate(label)]
        return sequence_label_prob(per_token)


def train(view, label_space: LabelSpace, config: TrainConfig | None = None) -> ClassifierModel:
    """Fit the built-in classifier on (input, label) pairs.

    Classes absent from the view are still part of the output space. For
    sequence labeling each token becomes an independent training row over
    context-window features.
    """
    view = list(view)
    if not view:
        raise DataError("training view is empty")
    config = config or TrainConfig()
    classes = label_space.labels
    class_index = {c: i for i, c in enumerate(classes)}

    if label_space.task_kind is TaskKind.CLASSIFICATION:
        X = build_text_matrix([x for x, _ in view], config.dimension)
        y = np.array([class_index[label] for _, label in view], dtype=np.int64)
    else:
        sentences = []
        tags = []
        for x, label in view:
            if len(label) != len(x):
                raise DataError("sequence label length must match token count")
            sentences.append(tuple(x))
            tags.extend(label)
        X = build_token_matrix(sentences, config.dimension, config.context_window)
        y = np.array([class_index[t] for t in tags], dtype=np.int64)

    W, b = _fit_core(X, y, len(classes), config)
    return ClassifierModel(label_space, config, W, b)


def sequence_label_prob(token_probs) -> float:
    """Length-normalized sentence probability: the geometric mean of the
    per-token probabilities of the current tags, (prod p_j)^(1/L)."""
    probs = list(token_probs)
    if not probs:
        raise DataError("token probability list is empty")
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise DataError(f"token probability {p} outside [0, 1]")
    product = math.prod(probs)
    return product ** (1.0 / len(probs))


def evaluate(model: ClassifierModel, test_items) -> dict[str, float]:
    """Standard metrics against ground truth.

    Classification: accuracy and macro F1 (averaged over classes with
    support). Sequence labeling: token accuracy plus micro precision, recall
    and F1 over non-outside tags.
    """
    items = list(test_items)
    if not items:
        raise DataError("test collection is empty")
    space = model.label_space

    if space.task_kind is TaskKind.CLASSIFICATION:
        X = build_text_matrix([x for x, _ in items], model.config.dimension)
        pred_idx = np.argmax(model.predict_proba_matrix(X), axis=1)
        true_idx = np.array([space.index_of(label) for _, label in items])
        accuracy = float(np.mean(pred_idx == true_idx))
        f1s = []
        for c in range(len(space.classes)):
            support = int(np.sum(true_idx == c))
            if support == 0:
                continue
            tp = int(np.sum((pred_idx == c) & (true_idx == c)))
            fp = int(np.sum((pred_idx == c) & (true_idx != c)))
            fn = support - tp
            denom = 2 * tp + fp + fn
            f1s.append(2 * tp / denom if denom else 0.0)
        return {"accuracy": accuracy, "macro_f1": float(np.mean(f1s)) if f1s else 0.0}

    pred_true_pairs = []
    for tokens, true_tags in items:
        if len(true_tags) != len(tokens):
            raise DataError("sequence label length must match token count")
        pred_tags = model.predict(tokens)
        pred_true_pairs.extend(zip(pred_tags, true_tags))
    return micro_token_prf(pred_true_pairs, space.outside_tag)


def micro_token_prf(pred_true_pairs, outside_tag: str) -> dict[str, float]:
    """Micro-averaged precision/recall/F1 over non-outside tags.

    A token counts as TP when the predicted entity tag matches, FP when a
    non-outside tag was predicted wrongly, FN when a non-outside truth was
    missed or mistagged.
    """
    tp = fp = fn = correct = total = 0
    for p, t in pred_true_pairs:
        total += 1
        if p == t:
            correct += 1
        if p != outside_tag and p == t:
            tp += 1
        if p != outside_tag and p != t:
            fp += 1
        if t != outside_tag and p != t:
            fn += 1
    if total == 0:
        raise DataError("no token pairs to score")
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return {
        "token_accuracy": correct / total,
        "token_precision": precision,
        "token_recall": recall,
        "token_f1": f1,
    }


def primary_metric_name(task_kind: TaskKind) -> str:
    return "accuracy" if task_kind is TaskKind.CLASSIFICATION else "token_f1"


def save_model(model: ClassifierModel, path) -> None:
    """Versioned .npz snapshot (weights + config); reload reproduces identical
    predictions bit for bit."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "label_space": {
            "task_kind": model.label_space.task_kind.value,
            "classes": list(model.label_space.classes),
            "entity_tags": list(model.label_space.entity_tags),
            "outside_tag": model.label_space.outside_tag,
        },
    }
    np.savez(Path(path), weights=model.weights, bias=model.bias,
             meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8))


def load_model(path) -> ClassifierModel:
    with np.load(Path(path)) as blob:
        meta = json.loads(bytes(blob["meta"].tobytes()).decode("utf-8"))
        if meta["format_version"] != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format version {meta['format_version']}")
        ls = meta["label_space"]
        space = LabelSpace(
            TaskKind(ls["task_kind"]),
            classes=tuple(ls["classes"]),
            entity_tags=tuple(ls["entity_tags"]),
            outside_tag=ls.get("outside_tag", "O"),
        )
        return ClassifierModel(space, TrainConfig.from_dict(meta["config"]),
                               blob["weights"].copy(), blob["bias"].copy())
