"""HTTP facade over the annotation store.

Endpoints: GET /api/tasks/next, POST /api/votes, GET /api/progress,
GET /api/agreement. The optional UI directory is mounted at / so the
annotation front-end can be served by the same process.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .annotation import AnnotationStore, compute_alpha
from .errors import (
    AuthorizationError,
    ConflictError,
    UndefinedAlphaError,
    VoteValidationError,
)


class JudgmentBody(BaseModel):
    extractor_id: str
    purpose_index: int
    valid: bool


class VoteBody(BaseModel):
    entry_id: str
    annotator_id: str
    has_purpose: bool
    purpose_judgments: list[JudgmentBody] | None = None
    supersede: bool = Field(default=False)


def create_app(store: AnnotationStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(...)) -> Response:
        try:
            task = store.next_task(annotator)
        except AuthorizationError as exc:
            return JSONResponse({"error": str(exc)}, status_code=403)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(
            {
                "entry_id": task.entry_id,
                "text": task.text,
                "purposes": [
                    {"extractor_id": p.extractor_id, "index": p.index, "text": p.text}
                    for p in task.purposes
                ],
            }
        )

    @app.post("/api/votes")
    def submit_vote(body: VoteBody) -> Response:
        judgments = {
            (j.extractor_id, j.purpose_index): j.valid for j in body.purpose_judgments or []
        }
        try:
            vote = store.submit_vote(
                entry_id=body.entry_id,
                annotator_id=body.annotator_id,
                has_purpose=body.has_purpose,
                purpose_judgments=judgments or None,
                supersede=body.supersede,
            )
        except AuthorizationError as exc:
            return JSONResponse({"error": str(exc)}, status_code=403)
        except ConflictError as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except VoteValidationError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        return JSONResponse({"accepted": True, "seq": vote.seq}, status_code=201)

    @app.get("/api/progress")
    def progress() -> dict:
        return store.progress()

    @app.get("/api/agreement")
    def agreement(question: str = Query("entry"), complete: bool = Query(False)) -> Response:
        if question not in ("entry", "purpose"):
            return JSONResponse({"error": f"unknown question {question!r}"}, status_code=422)
        basis = "complete-panel purposes" if (question == "purpose" and complete) else "all votes"
        try:
            alpha = compute_alpha(
                store.latest_votes(),
                question=question,
                complete_only=complete,
                panel_size=store.panel_size,
            )
        except UndefinedAlphaError as exc:
            return JSONResponse(
                {"question": question, "alpha": None, "basis": basis, "reason": str(exc)}
            )
        return JSONResponse({"question": question, "alpha": alpha, "basis": basis})

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
