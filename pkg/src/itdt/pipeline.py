"""Test-time defense orchestration, persisted records and the analyst queue.

One `defend` call runs feature extraction, detection, identification,
replacement selection, spelling repair and final classification, and appends
exactly one record to the store. Records flagged for human intervention are
enqueued; analysts resolve queue items with a verdict that attaches to (never
mutates) the original record. Aggregate accuracy follows the four counting
rules over ground-truthed records.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .detector import DetectorModel, detect
from .errors import EmptyInput, NotPending
from .features import extract_features
from .identify import IdentificationConfig, identify
from .model import Classifier, forward, surrogate
from .relevance import relevance_maps
from .transform import (
    DEFAULT_EDIT_DISTANCE,
    DEFAULT_MT_THRESHOLD,
    DEFAULT_TRIES,
    MSG_CLEAN,
    CANONICAL_MESSAGES,
    TransformResources,
    generate_candidates,
    mt_select,
    spelling_transform,
)
from .vocab import tokenize


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class PipelineConfig:
    sc_thres: float = 0.3
    fq_thres: float = 0.001
    mt_threshold: float = DEFAULT_MT_THRESHOLD
    ed_ds: int = DEFAULT_EDIT_DISTANCE
    tries: int = DEFAULT_TRIES

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def identification(self) -> IdentificationConfig:
        return IdentificationConfig(sc_thres=self.sc_thres, fq_thres=self.fq_thres)


@dataclass
class DefenseRecord:
    example_id: str
    text: str
    adv_pcs: float
    detected_adversarial: bool
    p_cand: list[dict] = field(default_factory=list)
    replacements: dict[str, dict] = field(default_factory=dict)  # position -> candidate
    tf_text: str = ""
    ground_truth: int | None = None
    y_pred: int = -1
    y_pred_final: int = -1
    final_confidence: float = 0.0
    human: bool = False
    human_msg: str = ""
    tries_used: int = 0
    status: str = "ok"
    error: str = ""
    created_at: str = field(default_factory=_now)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "DefenseRecord":
        return cls(**json.loads(line))


@dataclass
class AnalystVerdict:
    label: int
    note: str = ""
    analyst: str = ""
    resolved_at: str = field(default_factory=_now)


@dataclass
class QueueItem:
    record_id: str
    status: str  # pending | resolved
    record: DefenseRecord
    verdict: AnalystVerdict | None = None

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "status": self.status,
            "record": asdict(self.record),
            "verdict": None if self.verdict is None else asdict(self.verdict),
        }


class RecordStore:
    """Append-only JSONL logs: defense records, queue events, relevance dumps.

    A single lock serializes writers; readers get snapshots of the in-memory
    state, which is rebuilt from the logs on startup.
    """

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self._lock = threading.Lock()
        self.records_path = os.path.join(root, "records.jsonl")
        self.queue_path = os.path.join(root, "queue.jsonl")
        self.relevance_path = os.path.join(root, "relevance.jsonl")
        self._records: list[DefenseRecord] = []
        self._by_id: dict[str, DefenseRecord] = {}
        self._queued: dict[str, AnalystVerdict | None] = {}  # record_id -> verdict
        self._queue_order: list[str] = []
        self._relevance: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        if os.path.exists(self.records_path):
            with open(self.records_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = DefenseRecord.from_json(line)
                        self._records.append(rec)
                        self._by_id[rec.example_id] = rec
        if os.path.exists(self.queue_path):
            with open(self.queue_path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    rid = event["record_id"]
                    if event["event"] == "enqueue":
                        if rid not in self._queued:
                            self._queued[rid] = None
                            self._queue_order.append(rid)
                    elif event["event"] == "resolve":
                        self._queued[rid] = AnalystVerdict(
                            label=event["label"], note=event.get("note", ""),
                            analyst=event.get("analyst", ""),
                            resolved_at=event["at"],
                        )
        if os.path.exists(self.relevance_path):
            with open(self.relevance_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        self._relevance[row["example_id"]] = row

    def _append(self, path: str, payload: str) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(payload + "\n")

    def append_record(self, record: DefenseRecord) -> None:
        with self._lock:
            self._append(self.records_path, record.to_json())
            self._records.append(record)
            self._by_id[record.example_id] = record

    def record(self, example_id: str) -> DefenseRecord | None:
        return self._by_id.get(example_id)

    def records(self, start: str | None = None, end: str | None = None) -> list[DefenseRecord]:
        with self._lock:
            snapshot = list(self._records)
        if start:
            snapshot = [r for r in snapshot if r.created_at >= start]
        if end:
            snapshot = [r for r in snapshot if r.created_at <= end]
        return snapshot

    def save_relevance(self, example_id: str, tokens: list[str], maps) -> None:
        row = {
            "example_id": example_id,
            "tokens": list(tokens),
            "a_map": [float(x) for x in maps.a_map],
            "i_grad": [float(x) for x in maps.i_grad],
        }
        with self._lock:
            self._append(self.relevance_path, json.dumps(row))
            self._relevance[example_id] = row

    def relevance(self, example_id: str) -> dict | None:
        return self._relevance.get(example_id)

    # ---------------------------------------------------------- queue

    def enqueue(self, record: DefenseRecord) -> QueueItem:
        with self._lock:
            if record.example_id not in self._queued:
                self._append(self.queue_path, json.dumps(
                    {"event": "enqueue", "record_id": record.example_id, "at": _now()}))
                self._queued[record.example_id] = None
                self._queue_order.append(record.example_id)
        return QueueItem(record.example_id, "pending", record)

    def queue_items(self, status: str | None = None) -> list[QueueItem]:
        with self._lock:
            snapshot = [(rid, self._queued[rid]) for rid in self._queue_order]
        items = []
        for rid, verdict in snapshot:
            state = "resolved" if verdict is not None else "pending"
            if status and state != status:
                continue
            items.append(QueueItem(rid, state, self._by_id[rid], verdict))
        return items

    def resolve(self, record_id: str, label: int, note: str = "",
                analyst: str = "") -> QueueItem:
        with self._lock:
            if record_id not in self._queued or self._queued[record_id] is not None:
                raise NotPending(f"queue item {record_id!r} is missing or already resolved")
            verdict = AnalystVerdict(label=label, note=note, analyst=analyst)
            self._append(self.queue_path, json.dumps(
                {"event": "resolve", "record_id": record_id, "label": label,
                 "note": note, "analyst": analyst, "at": verdict.resolved_at}))
            self._queued[record_id] = verdict
        return QueueItem(record_id, "resolved", self._by_id[record_id], verdict)

    def pending_depth(self) -> int:
        with self._lock:
            return sum(1 for v in self._queued.values() if v is None)

    def analyst_labels(self) -> dict[str, int]:
        with self._lock:
            return {rid: v.label for rid, v in self._queued.items() if v is not None}


# ------------------------------------------------------------------ metrics


@dataclass
class MetricValue:
    value: float
    numerator: int
    denominator: int
    undefined: bool = False
    excluded: int = 0  # rows without ground truth

    def to_dict(self) -> dict:
        return asdict(self)


def _with_truth(records: list[DefenseRecord]) -> tuple[list[DefenseRecord], int]:
    kept = [r for r in records if r.ground_truth is not None and r.status == "ok"]
    return kept, len(records) - len(kept)


def acc_all(records: list[DefenseRecord]) -> MetricValue:
    """Share of records that end correct or at least land with a human."""
    rows, excluded = _with_truth(records)
    if not rows:
        return MetricValue(0.0, 0, 0, undefined=True, excluded=excluded)
    hits = sum(1 for r in rows
               if (r.ground_truth != r.y_pred_final and r.human)
               or r.ground_truth == r.y_pred_final)
    return MetricValue(hits / len(rows), hits, len(rows), excluded=excluded)


def acc_tf(records: list[DefenseRecord]) -> MetricValue:
    rows, excluded = _with_truth(records)
    det_rows = [r for r in rows if r.detected_adversarial]
    if not det_rows:
        return MetricValue(0.0, 0, 0, undefined=True, excluded=excluded)
    correct = sum(1 for r in det_rows if r.y_pred_final == r.ground_truth)
    return MetricValue(correct / len(det_rows), correct, len(det_rows), excluded=excluded)


def transform_error(records: list[DefenseRecord]) -> MetricValue:
    rows, excluded = _with_truth(records)
    det_rows = [r for r in rows if r.detected_adversarial]
    if not det_rows:
        return MetricValue(0.0, 0, 0, undefined=True, excluded=excluded)
    wrong = sum(1 for r in det_rows if r.y_pred_final != r.ground_truth)
    return MetricValue(wrong / len(det_rows), wrong, len(det_rows), excluded=excluded)


def acc_human(records: list[DefenseRecord]) -> MetricValue:
    rows, excluded = _with_truth(records)
    wrong = [r for r in rows if r.detected_adversarial and r.y_pred_final != r.ground_truth]
    if not wrong:
        return MetricValue(0.0, 0, 0, undefined=True, excluded=excluded)
    flagged = sum(1 for r in wrong if r.human)
    return MetricValue(flagged / len(wrong), flagged, len(wrong), excluded=excluded)


def analyst_corrected_accuracy(records: list[DefenseRecord],
                               analyst_labels: dict[str, int]) -> MetricValue:
    """Accuracy when resolved analyst labels stand in for the final label."""
    rows, excluded = _with_truth(records)
    if not rows:
        return MetricValue(0.0, 0, 0, undefined=True, excluded=excluded)
    hits = 0
    for r in rows:
        label = analyst_labels.get(r.example_id, r.y_pred_final)
        hits += int(label == r.ground_truth)
    return MetricValue(hits / len(rows), hits, len(rows), excluded=excluded)


def threat_report(records: list[DefenseRecord], store: RecordStore | None = None,
                  window: tuple[str | None, str | None] = (None, None)) -> dict:
    """Aggregates for the analyst dashboard over one record window."""
    msg_hist: dict[str, int] = {}
    cand_hist: dict[str, int] = {}
    repl_hist: dict[str, int] = {}
    detected = 0
    errors = 0
    for rec in records:
        if rec.status != "ok":
            errors += 1
            continue
        msg_hist[rec.human_msg] = msg_hist.get(rec.human_msg, 0) + 1
        if rec.detected_adversarial:
            detected += 1
        for cand in rec.p_cand:
            cand_hist[cand["word"]] = cand_hist.get(cand["word"], 0) + 1
        for pos, repl in rec.replacements.items():
            idx = int(pos)
            original = rec.text.split()[idx - 1] if 0 < idx <= len(rec.text.split()) else "?"
            key = f"{original}->{repl['token']}"
            repl_hist[key] = repl_hist.get(key, 0) + 1
    top = lambda hist: sorted(hist.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
    analyst_labels = store.analyst_labels() if store else {}
    report = {
        "window": {"from": window[0], "to": window[1]},
        "total_records": len(records),
        "error_records": errors,
        "detected_adversarial": detected,
        "detected_clean": len(records) - errors - detected,
        "message_histogram": msg_hist,
        "top_candidate_words": top(cand_hist),
        "top_replacements": top(repl_hist),
        "metrics": {
            "acc_all": acc_all(records).to_dict(),
            "acc_tf": acc_tf(records).to_dict(),
            "transform_error": transform_error(records).to_dict(),
            "acc_human": acc_human(records).to_dict(),
            "analyst_corrected_accuracy":
                analyst_corrected_accuracy(records, analyst_labels).to_dict(),
        },
        "pending_queue_depth": store.pending_depth() if store else 0,
    }
    return report


# ------------------------------------------------------------------ pipeline


class DefensePipeline:
    """Owns the model surrogate, detector, resources, config and store."""

    def __init__(self, model: Classifier, detector: DetectorModel,
                 resources: TransformResources, store: RecordStore,
                 config: PipelineConfig | None = None):
        self.model = model
        self.surrogate = surrogate(model)
        self.detector = detector
        self.resources = resources
        self.store = store
        self.config = config or PipelineConfig()

    def classify(self, text: str) -> tuple[int, list[float]]:
        seq = tokenize(text, self.model.vocab)
        pred = forward(self.model, seq)
        return pred.label, [float(x) for x in pred.pcs]

    def _detect_text(self, text: str) -> tuple[bool, float]:
        seq = tokenize(text, self.surrogate.vocab)
        fv = extract_features(seq, self.surrogate)
        verdict = detect(self.detector, fv)
        return verdict.is_adversarial, verdict.adv_pcs

    def defend(self, text: str, ground_truth: int | None = None,
               example_id: str | None = None) -> DefenseRecord:
        """Full defense for one text; exactly one record is appended.

        EmptyInput propagates to the caller; any later component failure
        produces a record with an error status instead of silently dropping
        the example.
        """
        example_id = example_id or f"rec-{uuid.uuid4().hex[:12]}"
        seq = tokenize(text, self.surrogate.vocab, example_id=example_id)
        record = DefenseRecord(example_id=example_id, text=seq.detokenize(),
                               adv_pcs=0.0, detected_adversarial=False,
                               ground_truth=ground_truth)
        try:
            self._defend_inner(seq, record)
        except EmptyInput:
            raise
        except Exception as exc:  # component failure -> error record
            record.status = "error"
            record.error = f"{type(exc).__name__}: {exc}"
        self.store.append_record(record)
        if record.human and record.status == "ok":
            self.store.enqueue(record)
        return record

    def _defend_inner(self, seq, record: DefenseRecord) -> None:
        vocab = self.surrogate.vocab
        pred = forward(self.surrogate, seq)
        record.y_pred = pred.label
        maps = relevance_maps(self.surrogate, seq)
        self.store.save_relevance(seq.example_id, seq.tokens, maps)
        fv = extract_features(seq, self.surrogate, maps=maps)
        verdict = detect(self.detector, fv)
        record.adv_pcs = verdict.adv_pcs
        record.detected_adversarial = verdict.is_adversarial

        if not verdict.is_adversarial:
            record.human = False
            record.human_msg = MSG_CLEAN
            record.tf_text = spelling_transform(seq.detokenize(), vocab,
                                                self.config.ed_ds)
        else:
            p_cand = identify(seq, self.surrogate, maps,
                              config=self.config.identification())
            record.p_cand = [pc.to_dict() for pc in p_cand]
            candidates = {
                pc.position: generate_candidates(pc.word, pc.position, seq,
                                                 self.resources)
                for pc in p_cand
            }
            outcome = mt_select(seq, p_cand, candidates, pred.pcs, pred.label,
                                verdict.adv_pcs, self.surrogate, self._detect_text,
                                threshold=self.config.mt_threshold,
                                tries=self.config.tries)
            record.human = outcome.human
            record.human_msg = outcome.human_msg
            record.tries_used = outcome.tries_used
            record.replacements = {str(pos): cand.to_dict()
                                   for pos, cand in outcome.replacements.items()}
            record.tf_text = spelling_transform(outcome.tf_text, vocab,
                                                self.config.ed_ds)
        final_pred = forward(self.surrogate, tokenize(record.tf_text, vocab))
        record.y_pred_final = final_pred.label
        record.final_confidence = float(np.max(final_pred.pcs))
        assert record.human_msg in CANONICAL_MESSAGES
