"""Annotation backends: ground-truth oracle, transcript replay, and the
thread-safe lease queue that the HTTP service drains.

Every backend exposes ``annotate(requests) -> responses`` with exactly-one
response per request id. Requests carry the model's prediction so a client can
display it; none of the backends here ever consult it.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .data import DataError, Dataset, Input, Label

ORACLE_TIMESTAMP = "1970-01-01T00:00:00Z"   # fixed so simulated runs are byte-reproducible


class AnnotationSessionClosed(RuntimeError):
    """The live session ended before all requests were answered."""


class DuplicateAnnotation(ValueError):
    """A second response arrived for an already-answered request."""


@dataclass(frozen=True)
class AnnotationRequest:
    example_id: str
    input: Input
    current_label: Label
    model_prediction: list          # per-class probabilities; per-token rows for sequences
    predicted_label: Label
    iteration: int

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "input": list(self.input) if isinstance(self.input, tuple) else self.input,
            "current_label": (list(self.current_label) if isinstance(self.current_label, tuple)
                              else self.current_label),
            "model_prediction": self.model_prediction,
            "predicted_label": (list(self.predicted_label) if isinstance(self.predicted_label, tuple)
                                else self.predicted_label),
            "iteration": self.iteration,
        }

    @staticmethod
    def from_dict(d: dict) -> "AnnotationRequest":
        def _val(v):
            return tuple(v) if isinstance(v, list) else v

        return AnnotationRequest(
            example_id=d["example_id"],
            input=_val(d["input"]),
            current_label=_val(d["current_label"]),
            model_prediction=d["model_prediction"],
            predicted_label=_val(d["predicted_label"]),
            iteration=d["iteration"],
        )


@dataclass(frozen=True)
class AnnotationResponse:
    example_id: str
    label: Label
    annotator_id: str
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "label": list(self.label) if isinstance(self.label, tuple) else self.label,
            "annotator_id": self.annotator_id,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_dict(d: dict) -> "AnnotationResponse":
        label = d["label"]
        return AnnotationResponse(
            example_id=d["example_id"],
            label=tuple(label) if isinstance(label, list) else label,
            annotator_id=d["annotator_id"],
            timestamp=d["timestamp"],
        )


def oracle_annotate(requests, dataset: Dataset) -> list[AnnotationResponse]:
    """Answer every request with the example's ground truth, in request order."""
    responses = []
    for req in requests:
        ex = dataset.get(req.example_id)
        if ex.ground_truth is None:
            raise DataError(f"example {req.example_id!r} has no ground truth to simulate with")
        responses.append(AnnotationResponse(req.example_id, ex.ground_truth,
                                            "oracle", ORACLE_TIMESTAMP))
    return responses


def replay_annotate(requests, transcript: dict[str, AnnotationResponse]) -> list[AnnotationResponse]:
    """Answer from a recorded transcript; every requested id must be present."""
    responses = []
    for req in requests:
        if req.example_id not in transcript:
            raise DataError(f"transcript has no response for example {req.example_id!r}")
        responses.append(transcript[req.example_id])
    return responses


def load_transcript(path) -> dict[str, AnnotationResponse]:
    """Read a JSONL transcript of AnnotationResponse records keyed by example id."""
    transcript: dict[str, AnnotationResponse] = {}
    with open(Path(path), encoding="utf-8") as fh:
        for line, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                resp = AnnotationResponse.from_dict(json.loads(raw))
            except (json.JSONDecodeError, KeyError) as err:
                raise DataError(f"transcript line {line}: malformed record ({err})") from None
            transcript[resp.example_id] = resp
    return transcript


class OracleAnnotator:
    """Simulated expert answering with ground truth; enables automated runs."""

    name = "oracle"

    def __init__(self, dataset: Dataset):
        self.dataset = dataset

    def annotate(self, requests) -> list[AnnotationResponse]:
        return oracle_annotate(requests, self.dataset)


class ReplayAnnotator:
    """Replays a recorded session so live runs can be reproduced offline."""

    name = "replay"

    def __init__(self, transcript):
        if isinstance(transcript, (str, Path)):
            transcript = load_transcript(transcript)
        self.transcript = transcript

    def annotate(self, requests) -> list[AnnotationResponse]:
        return replay_annotate(requests, self.transcript)


@dataclass
class _Slot:
    request: AnnotationRequest
    leased_to: str | None = None
    lease_deadline: float = 0.0
    response: AnnotationResponse | None = None


class AnnotationQueue:
    """Single synchronization point between the engine and live annotators.

    The engine posts one batch per iteration and blocks until every id has
    exactly one response. Clients lease one request at a time; an expired
    lease makes the item leasable again, and whichever response lands first
    wins (later submissions get a conflict).
    """

    def __init__(self, lease_timeout: float = 600.0):
        self.lease_timeout = lease_timeout
        self._lock = threading.Condition()
        self._slots: dict[str, _Slot] = {}
        self._order: list[str] = []
        self._iteration = 0
        self._closed = False

    def post_batch(self, requests, iteration: int) -> None:
        with self._lock:
            if self._closed:
                raise AnnotationSessionClosed("queue is closed")
            if any(slot.response is None for slot in self._slots.values()):
                raise RuntimeError("previous batch is not fully answered")
            self._slots = {r.example_id: _Slot(r) for r in requests}
            self._order = [r.example_id for r in requests]
            self._iteration = iteration
            self._lock.notify_all()

    def lease(self, annotator_id: str, now: float | None = None) -> AnnotationRequest | None:
        """Next unanswered, unleased (or lease-expired) request; None if empty.

        An annotator re-requesting keeps its own leased item (lease renewed)
        rather than hoarding several.
        """
        now = time.monotonic() if now is None else now
        with self._lock:
            for example_id in self._order:
                slot = self._slots[example_id]
                if slot.response is None and slot.leased_to == annotator_id:
                    slot.lease_deadline = now + self.lease_timeout
                    return slot.request
            for example_id in self._order:
                slot = self._slots[example_id]
                if slot.response is None and (slot.leased_to is None or now >= slot.lease_deadline):
                    slot.leased_to = annotator_id
                    slot.lease_deadline = now + self.lease_timeout
                    return slot.request
        return None

    def submit(self, example_id: str, label: Label, annotator_id: str,
               timestamp: str | None = None) -> AnnotationResponse:
        with self._lock:
            if example_id not in self._slots:
                raise KeyError(example_id)
            slot = self._slots[example_id]
            if slot.response is not None:
                raise DuplicateAnnotation(f"example {example_id!r} already annotated")
            ts = timestamp or time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            slot.response = AnnotationResponse(example_id, label, annotator_id, ts)
            self._lock.notify_all()
            return slot.response

    def wait_all(self, poll: float = 0.1) -> list[AnnotationResponse]:
        """Block until the whole batch is answered; responses in batch order."""
        with self._lock:
            while True:
                if self._closed:
                    raise AnnotationSessionClosed("queue closed before batch completed")
                pending = [i for i in self._order if self._slots[i].response is None]
                if not pending:
                    return [self._slots[i].response for i in self._order]
                self._lock.wait(timeout=poll)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._lock.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed

    def progress(self) -> dict:
        with self._lock:
            answered = sum(1 for s in self._slots.values() if s.response is not None)
            return {
                "iteration": self._iteration,
                "batch_size": len(self._order),
                "answered": answered,
                "remaining": len(self._order) - answered,
            }


class QueueAnnotator:
    """Engine-side adapter: blocks on an AnnotationQueue until humans answer."""

    name = "queue"

    def __init__(self, queue: AnnotationQueue, on_status=None):
        self.queue = queue
        self.on_status = on_status or (lambda status: None)

    def annotate(self, requests) -> list[AnnotationResponse]:
        requests = list(requests)
        if not requests:
            return []
        self.queue.post_batch(requests, requests[0].iteration)
        self.on_status("annotating")
        try:
            return self.queue.wait_all()
        finally:
            self.on_status("training")
