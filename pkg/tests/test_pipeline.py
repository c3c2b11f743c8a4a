"""Defense orchestration tests: defend paths, metrics, store and queue."""

from __future__ import annotations

import numpy as np
import pytest

from itdt import pipeline as pl
from itdt import transform as tr
from itdt.errors import EmptyInput, NotPending
from itdt.pipeline import DefensePipeline, DefenseRecord, PipelineConfig, RecordStore
from itdt.transform import TransformResources


@pytest.fixture()
def pipeline(desk_kit, tmp_path):
    store = RecordStore(str(tmp_path / "store"))
    return DefensePipeline(desk_kit["model"], desk_kit["detector"],
                           desk_kit["resources"], store)


def mk_record(gt, final, human, detected, msg=tr.MSG_CLEAN, ex_id=None, status="ok"):
    return DefenseRecord(
        example_id=ex_id or f"r{np.random.default_rng().integers(1e9)}",
        text="t", adv_pcs=0.5, detected_adversarial=detected, ground_truth=gt,
        y_pred=0, y_pred_final=final, human=human, human_msg=msg, status=status,
    )


# ------------------------------------------------------------------ defend


def test_defend_clean_path(pipeline):
    record = pipeline.defend("the food was excellent and really tasty",
                             ground_truth=0, example_id="clean-1")
    assert record.status == "ok"
    if not record.detected_adversarial:
        assert record.human is False
        assert record.human_msg == tr.MSG_CLEAN
        assert record.y_pred_final == record.y_pred
    assert pipeline.store.record("clean-1") is record


def test_defend_converts_planted_substitution(pipeline):
    # stands in for a word-substitution attack output: the rare confusable
    # word drives the wrong label and the lexicon knows the way back
    record = pipeline.defend("the food was atrocious and really tasty",
                             ground_truth=0, example_id="adv-1")
    assert record.status == "ok"
    assert record.detected_adversarial
    assert record.human_msg in tr.CANONICAL_MESSAGES
    if record.human_msg == tr.MSG_CONVERTED:
        assert record.human is False
        assert record.y_pred_final == 0
        assert record.replacements


def test_defend_empty_candidates_goes_to_queue(desk_kit, tmp_path):
    # resources with a useless lexicon: loaded, but no candidates for anything
    syn = tmp_path / "useless.txt"
    syn.write_text("unrelatedword: anotherword\n")
    resources = TransformResources(desk_kit["model"].vocab, synonym_path=str(syn))
    store = RecordStore(str(tmp_path / "store2"))
    pipeline = DefensePipeline(desk_kit["model"], desk_kit["detector"],
                               resources, store)
    record = pipeline.defend("the food was atrocious and really tasty",
                             ground_truth=0, example_id="adv-2")
    assert record.detected_adversarial
    assert record.human is True
    assert record.human_msg == tr.MSG_NO_REPLACEMENT
    pending = store.queue_items("pending")
    assert [item.record_id for item in pending] == ["adv-2"]


def test_defend_empty_input_propagates(pipeline):
    with pytest.raises(EmptyInput):
        pipeline.defend("   ")


def test_defend_always_appends_exactly_one_record(pipeline):
    before = len(pipeline.store.records())
    pipeline.defend("the food was excellent", example_id="one")
    assert len(pipeline.store.records()) == before + 1


def test_defend_human_record_always_flagged_before_label(pipeline):
    for i, text in enumerate(["the food was atrocious", "the staff was abysmal"]):
        record = pipeline.defend(text, ground_truth=0, example_id=f"h-{i}")
        if record.human:
            assert record.human_msg != tr.MSG_CLEAN
            assert record.human_msg in tr.CANONICAL_MESSAGES
    pending_ids = {q.record_id for q in pipeline.store.queue_items("pending")}
    human_ids = {r.example_id for r in pipeline.store.records()
                 if r.human and r.status == "ok"}
    assert pending_ids == human_ids


def test_clean_path_only_mutation_is_spelling(pipeline):
    record = pipeline.defend("the food was exce1lent and really tasty",
                             example_id="sp-1")
    if not record.detected_adversarial:
        # conservativeness: word count kept, only spelling normalized
        assert record.tf_text == "the food was excellent and really tasty"


# ------------------------------------------------------------------ metrics


def test_acc_all_counting_example():
    records = [
        mk_record(gt=0, final=0, human=False, detected=False),  # correct
        mk_record(gt=1, final=1, human=False, detected=True),   # correct
        mk_record(gt=1, final=0, human=True, detected=True),    # wrong but human
        mk_record(gt=1, final=0, human=False, detected=True),   # wrong, silent
    ]
    value = pl.acc_all(records)
    assert value.value == 0.75
    assert value.denominator == 4


def test_acc_all_all_correct():
    records = [mk_record(gt=i % 2, final=i % 2, human=False, detected=False)
               for i in range(6)]
    assert pl.acc_all(records).value == 1.0


def test_metric_ops_skip_missing_ground_truth():
    records = [mk_record(gt=None, final=0, human=False, detected=True),
               mk_record(gt=0, final=0, human=False, detected=True)]
    value = pl.acc_tf(records)
    assert value.excluded == 1
    assert value.denominator == 1


def test_transform_metrics_trivials():
    det_ok = [mk_record(gt=1, final=1, human=False, detected=True) for _ in range(4)]
    assert pl.acc_tf(det_ok).value == 1.0
    assert pl.transform_error(det_ok).value == 0.0

    failures_flagged = [mk_record(gt=1, final=0, human=True, detected=True)
                        for _ in range(3)]
    assert pl.acc_human(failures_flagged).value == 1.0


def test_metric_ops_zero_denominator_flags():
    no_det = [mk_record(gt=0, final=0, human=False, detected=False)]
    assert pl.acc_tf(no_det).undefined
    assert pl.transform_error(no_det).undefined
    assert pl.acc_human(no_det).undefined


def test_metric_ops_match_counting_oracle():
    rng = np.random.default_rng(31)
    for _ in range(100):
        records = []
        for i in range(int(rng.integers(2, 40))):
            gt = int(rng.integers(0, 2)) if rng.random() < 0.8 else None
            records.append(mk_record(
                gt=gt, final=int(rng.integers(0, 2)), human=bool(rng.random() < 0.4),
                detected=bool(rng.random() < 0.5), ex_id=f"m{i}"))
        rows = [r for r in records if r.ground_truth is not None]
        det = [r for r in rows if r.detected_adversarial]
        n_ct = sum(1 for r in det if r.y_pred_final == r.ground_truth)
        n_in = sum(1 for r in det if r.y_pred_final != r.ground_truth)
        n_hi = sum(1 for r in det if r.y_pred_final != r.ground_truth and r.human)
        if rows:
            hits = sum(1 for r in rows if (r.ground_truth != r.y_pred_final and r.human)
                       or r.ground_truth == r.y_pred_final)
            assert pl.acc_all(records).value == hits / len(rows)
        if det:
            assert pl.acc_tf(records).value == n_ct / len(det)
            assert pl.transform_error(records).value == n_in / len(det)
            # identity: N_ct + (N_det ∧ N_in) = N_det
            assert n_ct + n_in == len(det)
        if n_in:
            assert pl.acc_human(records).value == n_hi / n_in


# ------------------------------------------------------------------ report


def test_threat_report_all_clean_window():
    records = [mk_record(gt=0, final=0, human=False, detected=False, ex_id=f"c{i}")
               for i in range(5)]
    report = pl.threat_report(records)
    assert report["detected_adversarial"] == 0
    assert report["top_candidate_words"] == []
    assert report["total_records"] == 5


def test_threat_report_consistent_with_metric_ops(pipeline, desk_kit):
    for i, (ex_id, text, label) in enumerate(desk_kit["test_docs"][:6]):
        pipeline.defend(text, ground_truth=label, example_id=f"tr-{i}")
    records = pipeline.store.records()
    report = pl.threat_report(records, store=pipeline.store)
    assert report["metrics"]["acc_all"] == pl.acc_all(records).to_dict()
    assert report["metrics"]["acc_tf"] == pl.acc_tf(records).to_dict()
    assert report["total_records"] == len(records)
    counted = report["detected_adversarial"] + report["detected_clean"] \
        + report["error_records"]
    assert counted == len(records)
    hist_total = sum(report["message_histogram"].values())
    assert hist_total == len(records) - report["error_records"]


# ------------------------------------------------------------------ queue


def test_queue_enqueue_list_resolve(tmp_path):
    store = RecordStore(str(tmp_path / "q"))
    rec = mk_record(gt=1, final=0, human=True, detected=True, ex_id="q-1",
                    msg=tr.MSG_NO_REPLACEMENT)
    store.append_record(rec)
    store.enqueue(rec)
    pending = store.queue_items("pending")
    assert [i.record_id for i in pending] == ["q-1"]

    item = store.resolve("q-1", label=1, note="manual check", analyst="ana")
    assert item.status == "resolved"
    assert item.verdict.label == 1
    assert store.queue_items("pending") == []
    assert [i.record_id for i in store.queue_items("resolved")] == ["q-1"]


def test_queue_double_resolve_raises(tmp_path):
    store = RecordStore(str(tmp_path / "q"))
    rec = mk_record(gt=1, final=0, human=True, detected=True, ex_id="q-2")
    store.append_record(rec)
    store.enqueue(rec)
    store.resolve("q-2", label=0)
    with pytest.raises(NotPending):
        store.resolve("q-2", label=1)
    with pytest.raises(NotPending):
        store.resolve("missing-id", label=1)


def test_queue_survives_restart(tmp_path):
    root = str(tmp_path / "q")
    store = RecordStore(root)
    rec = mk_record(gt=1, final=0, human=True, detected=True, ex_id="q-3")
    store.append_record(rec)
    store.enqueue(rec)

    reopened = RecordStore(root)
    pending = reopened.queue_items("pending")
    assert [i.record_id for i in pending] == ["q-3"]
    assert reopened.record("q-3") == rec

    reopened.resolve("q-3", label=1, analyst="ana")
    third = RecordStore(root)
    assert third.queue_items("pending") == []
    assert third.queue_items("resolved")[0].verdict.label == 1
    assert third.analyst_labels() == {"q-3": 1}


def test_queue_membership_matches_human_flag(tmp_path):
    store = RecordStore(str(tmp_path / "q"))
    rng = np.random.default_rng(3)
    human_ids = set()
    for i in range(12):
        human = bool(rng.random() < 0.5)
        rec = mk_record(gt=1, final=0, human=human, detected=True, ex_id=f"m-{i}")
        store.append_record(rec)
        if human:
            store.enqueue(rec)
            human_ids.add(rec.example_id)
    resolved = sorted(human_ids)[:2]
    for rid in resolved:
        store.resolve(rid, label=1)
    pending = {i.record_id for i in store.queue_items("pending")}
    assert pending == human_ids - set(resolved)


def test_records_append_only_round_trip(tmp_path):
    root = str(tmp_path / "r")
    store = RecordStore(root)
    recs = [mk_record(gt=0, final=0, human=False, detected=False, ex_id=f"a{i}")
            for i in range(5)]
    for r in recs:
        store.append_record(r)
    again = RecordStore(root)
    assert again.records() == recs


def test_record_window_filters(tmp_path):
    store = RecordStore(str(tmp_path / "w"))
    early = mk_record(gt=0, final=0, human=False, detected=False, ex_id="e")
    early.created_at = "2026-01-01T00:00:00+00:00"
    late = mk_record(gt=0, final=0, human=False, detected=False, ex_id="l")
    late.created_at = "2026-06-01T00:00:00+00:00"
    store.append_record(early)
    store.append_record(late)
    assert [r.example_id for r in store.records(start="2026-03-01")] == ["l"]
    assert [r.example_id for r in store.records(end="2026-03-01")] == ["e"]


def test_pipeline_config_round_trip(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"sc_thres": 0.4, "fq_thres": 0.002, "tries": 2, "extra": 1}')
    cfg = PipelineConfig.from_json(str(path))
    assert cfg.sc_thres == 0.4
    assert cfg.fq_thres == 0.002
    assert cfg.tries == 2
    assert cfg.mt_threshold == 0.1  # default preserved
    ident = cfg.identification()
    assert ident.sc_thres == 0.4
