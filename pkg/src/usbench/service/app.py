"""FastAPI service wrapping the evaluation and protocol engines.

Run with:  uvicorn usbench.service.app:app
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import BenchmarkError
from ..ingest import parse_dataset, parse_detections
from ..metrics import EvalParams, aggregate_mcap, evaluate_dataset, kitti_style_ap
from ..protocol import (
    HyperparameterGrid,
    check_compatibility,
    classify_submission,
    parse_submission_meta,
    validate_hyperparameter_grids,
)
from .schemas import (
    ClassifyRequest,
    ClassifyResponse,
    EvaluateRequest,
    EvaluateResponse,
    GridIn,
    GridValidationResponse,
    HealthResponse,
    McapRequest,
    McapResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="usbench",
        description="Universal-scale object detection benchmark service",
        version=__version__,
    )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(request: EvaluateRequest):
        try:
            dataset = parse_dataset(request.annotations.model_dump())
            detections = parse_detections(
                [d.model_dump() for d in request.detections], dataset
            )
            opts = request.options
            params = EvalParams(
                max_dets=opts.max_dets, undefined_policy=opts.undefined_policy
            )
            result = evaluate_dataset(
                dataset,
                detections,
                params,
                workers=opts.workers,
                method=opts.method,
            )
            if opts.kitti:
                result.kap = kitti_style_ap(
                    dataset,
                    detections,
                    max_dets=opts.max_dets,
                    workers=opts.workers,
                )
        except (BenchmarkError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return result.to_dict()

    @app.post("/mcap", response_model=McapResponse)
    def mcap(request: McapRequest):
        return McapResponse(mcap=aggregate_mcap(request.caps))

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(request: ClassifyRequest):
        try:
            meta = parse_submission_meta(request.model_dump())
            label = classify_submission(meta)
            obligations = check_compatibility(meta)
        except (BenchmarkError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return ClassifyResponse(
            label=label.text,
            training=label.training_text,
            training_base=label.training_base,
            evaluation=label.evaluation,
            obligations=[
                {"kind": o.kind, "code": o.code, "message": o.message}
                for o in obligations
            ],
        )

    @app.post("/validate-grids", response_model=GridValidationResponse)
    def validate_grids(grids: list[GridIn]):
        try:
            outcome = validate_hyperparameter_grids(
                [
                    HyperparameterGrid(g.name, g.kind, tuple(g.choices))
                    for g in grids
                ]
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return GridValidationResponse(
            compliant=outcome.compliant, violations=list(outcome.violations)
        )

    return app


app = create_app()
