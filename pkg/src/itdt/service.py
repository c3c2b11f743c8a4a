"""HTTP API over a defense pipeline.

JSON endpoints under /v1: classify, defend, the analyst queue, the threat
report, and per-example token relevance for the console's highlight view.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .errors import EmptyInput, NotPending
from .pipeline import DefensePipeline, threat_report


class ClassifyRequest(BaseModel):
    text: str


class ClassifyResponse(BaseModel):
    label: int
    pcs: list[float]


class DefendRequest(BaseModel):
    text: str
    ground_truth: int | None = None


class DefenseRecordModel(BaseModel):
    example_id: str
    text: str
    adv_pcs: float
    detected_adversarial: bool
    p_cand: list[dict]
    replacements: dict[str, dict]
    tf_text: str
    ground_truth: int | None
    y_pred: int
    y_pred_final: int
    final_confidence: float
    human: bool
    human_msg: str
    tries_used: int
    status: str
    error: str
    created_at: str


class VerdictRequest(BaseModel):
    label: int
    note: str = ""
    analyst: str = ""


class QueueItemModel(BaseModel):
    record_id: str
    status: str
    record: DefenseRecordModel
    verdict: dict | None = None


class RelevanceResponse(BaseModel):
    example_id: str
    tokens: list[str]
    a_map: list[float]
    i_grad: list[float]


def create_app(pipeline: DefensePipeline) -> FastAPI:
    app = FastAPI(title="itdt defense service", version="1.0")

    @app.post("/v1/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest):
        try:
            label, pcs = pipeline.classify(req.text)
        except EmptyInput as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return ClassifyResponse(label=label, pcs=pcs)

    @app.post("/v1/defend", response_model=DefenseRecordModel)
    def defend(req: DefendRequest):
        try:
            record = pipeline.defend(req.text, ground_truth=req.ground_truth)
        except EmptyInput as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return DefenseRecordModel(**record.__dict__)

    @app.get("/v1/queue", response_model=list[QueueItemModel])
    def queue(status: str | None = Query(default=None)):
        if status not in (None, "pending", "resolved"):
            raise HTTPException(status_code=422, detail="status must be pending or resolved")
        return [QueueItemModel(**item.to_dict()) for item in pipeline.store.queue_items(status)]

    @app.post("/v1/queue/{record_id}/verdict", response_model=QueueItemModel)
    def resolve(record_id: str, req: VerdictRequest):
        try:
            item = pipeline.store.resolve(record_id, req.label, req.note, req.analyst)
        except NotPending as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return QueueItemModel(**item.to_dict())

    @app.get("/v1/report")
    def report(
        window_from: str | None = Query(default=None, alias="from"),
        window_to: str | None = Query(default=None, alias="to"),
    ):
        records = pipeline.store.records(start=window_from, end=window_to)
        return threat_report(records, store=pipeline.store,
                             window=(window_from, window_to))

    @app.get("/v1/relevance/{example_id}", response_model=RelevanceResponse)
    def relevance(example_id: str):
        row = pipeline.store.relevance(example_id)
        if row is None:
            raise HTTPException(status_code=404, detail=f"no relevance for {example_id!r}")
        return RelevanceResponse(**row)

    return app
