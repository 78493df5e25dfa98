"""HTTP JSON API for blinded evaluation studies.

Evaluator endpoints authenticate with `X-Evaluator-Token`; admin endpoints
(create/close/reveal/report) with `X-Admin-Token`.  Every error response is
`{"code", "message", "field"?}`.  Responses never contain model identifiers
until the study has been closed and revealed.
"""

from __future__ import annotations

from fastapi import FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .study import (
    DIMENSIONS,
    OUTPUT_FIELDS,
    ScoreSheet,
    SheetRejected,
    StudyError,
    StudyStore,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field


class CaseBody(BaseModel):
    case_id: str
    history: str = ""
    physical_signs: str = ""
    symptoms: str = ""
    image_urls: list[str] = Field(default_factory=list)


class ModelBody(BaseModel):
    model_id: str
    outputs: dict[str, dict[str, str]] = Field(default_factory=dict)


class EvaluatorBody(BaseModel):
    evaluator_id: str
    token: str


class CreateStudyBody(BaseModel):
    models: list[ModelBody]
    cases: list[CaseBody]
    evaluators: list[EvaluatorBody]
    seed: int = 0
    study_id: str | None = None


class SheetBody(BaseModel):
    evaluator_id: str
    case_id: str
    letter: str
    scores: dict[str, int]


def create_app(store: StudyStore, admin_token: str) -> FastAPI:
    app = FastAPI(title="blinded evaluation service")

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        body = {"code": exc.code, "message": exc.message}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.status, content=body)

    def require_admin(token: str | None) -> None:
        if token != admin_token:
            raise ApiError(401, "unauthorized", "admin token missing or wrong")

    def load_study(study_id: str):
        try:
            return store.load(study_id)
        except StudyError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc

    def require_evaluator(study, token: str | None) -> str:
        for evaluator_id, expected in study.evaluators.items():
            if token == expected:
                return evaluator_id
        raise ApiError(401, "unauthorized", "evaluator token missing or wrong")

    @app.post("/studies", status_code=201)
    def create_study_endpoint(
        body: CreateStudyBody, x_admin_token: str | None = Header(default=None)
    ):
        require_admin(x_admin_token)
        for model in body.models:
            for case_outputs in model.outputs.values():
                unknown = set(case_outputs) - set(OUTPUT_FIELDS)
                if unknown:
                    raise ApiError(
                        422, "bad_output_field", f"unknown output fields: {sorted(unknown)}"
                    )
        try:
            study = store.create(
                models=[m.model_id for m in body.models],
                cases={c.case_id: c.model_dump() for c in body.cases},
                evaluators={e.evaluator_id: e.token for e in body.evaluators},
                seed=body.seed,
                outputs={m.model_id: m.outputs for m in body.models},
                study_id=body.study_id,
            )
        except StudyError as exc:
            raise ApiError(422, "invalid_study", str(exc)) from exc
        return {
            "study_id": study.study_id,
            "letters": list(study.letters),
            "case_ids": sorted(study.cases),
            "evaluator_count": len(study.evaluators),
            "dimensions": list(DIMENSIONS),
        }

    @app.get("/studies/{study_id}/assignments")
    def assignments(
        study_id: str,
        evaluator: str = Query(...),
        x_evaluator_token: str | None = Header(default=None),
    ):
        study = load_study(study_id)
        caller = require_evaluator(study, x_evaluator_token)
        if caller != evaluator:
            raise ApiError(403, "forbidden", "token does not belong to this evaluator")
        done = {
            (s.case_id, s.letter) for s in study.sheets if s.evaluator_id == evaluator
        }
        return {
            "study_id": study_id,
            "evaluator_id": evaluator,
            "closed": study.closed,
            "assignments": [
                {
                    "case_id": case_id,
                    "letters": list(study.letters),
                    "completed": {
                        letter: (case_id, letter) in done for letter in study.letters
                    },
                }
                for case_id in sorted(study.cases)
            ],
        }

    @app.get("/studies/{study_id}/cases/{case_id}/outputs")
    def case_outputs(
        study_id: str,
        case_id: str,
        x_evaluator_token: str | None = Header(default=None),
    ):
        study = load_study(study_id)
        require_evaluator(study, x_evaluator_token)
        if case_id not in study.cases:
            raise ApiError(404, "not_found", f"unknown case {case_id}")
        return {
            "case": study.cases[case_id],
            "outputs": study.outputs_by_letter(case_id),
        }

    @app.post("/studies/{study_id}/sheets")
    def submit(
        study_id: str,
        body: SheetBody,
        x_evaluator_token: str | None = Header(default=None),
    ):
        study = load_study(study_id)
        caller = require_evaluator(study, x_evaluator_token)
        if caller != body.evaluator_id:
            raise ApiError(403, "forbidden", "token does not belong to this evaluator")
        sheet = ScoreSheet(
            evaluator_id=body.evaluator_id,
            case_id=body.case_id,
            letter=body.letter,
            scores=body.scores,
        )
        try:
            store.submit(study_id, sheet)
        except SheetRejected as exc:
            raise ApiError(422, exc.code, str(exc), exc.field) from exc
        return {"status": "accepted", "total": sheet.total}

    @app.post("/studies/{study_id}/close")
    def close(study_id: str, x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        load_study(study_id)
        store.close(study_id)
        return {"status": "closed"}

    @app.post("/studies/{study_id}/reveal")
    def reveal_endpoint(study_id: str, x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        load_study(study_id)
        try:
            mapping = store.reveal(study_id)
        except StudyError as exc:
            raise ApiError(409, "not_closed", str(exc)) from exc
        return {
            "revealed": True,
            "mapping": {
                letter: model_id
                for model_id, letter in sorted(mapping.assignment.items(), key=lambda kv: kv[1])
            },
        }

    @app.get("/studies/{study_id}/report")
    def report(study_id: str, x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        load_study(study_id)
        return store.report(study_id).to_dict()

    return app
