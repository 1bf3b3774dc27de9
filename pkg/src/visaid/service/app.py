"""HTTP service exposing the pure, stateless operations.

Endpoints mirror the scripting bindings: markup parsing, trace metrics,
point accuracy, equidistant resampling, and 2D-to-3D lifting. File
ingestion stays in the CLI; the service takes plain JSON payloads.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..camera3d import CameraModel
from ..coordsys import ImageShape, NormBox, NormPoint
from ..evalkit import align_lengths, point_accuracy, trace_mae, trace_rmse
from ..labelgen import DegenerateTraceError, Trace2D, resample_equidistant
from ..lift3d import MissingDepthError, lift_naive, optimize_depths
from ..markup import MarkupParseError, PointSet, doc_to_json, parse_document
from .schemas import (
    HealthResponse,
    LiftRequest,
    LiftResponse,
    ParseRequest,
    ParseResponse,
    PointAccuracyRequest,
    PointAccuracyResponse,
    ResampleRequest,
    ResampleResponse,
    TraceMetricsRequest,
    TraceMetricsResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="visaid", version=__version__)

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/parse", response_model=ParseResponse)
    def parse(request: ParseRequest) -> ParseResponse:
        try:
            doc = parse_document(request.text)
        except MarkupParseError as exc:
            raise HTTPException(
                status_code=400, detail={"message": exc.message, "offset": exc.offset}
            )
        return ParseResponse(document=doc_to_json(doc))

    @app.post("/v1/metrics/trace", response_model=TraceMetricsResponse)
    def metrics_trace(request: TraceMetricsRequest) -> TraceMetricsResponse:
        try:
            pred, gt = align_lengths(request.pred, request.gt)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return TraceMetricsResponse(mae=trace_mae(pred, gt), rmse=trace_rmse(pred, gt))

    @app.post("/v1/metrics/point-accuracy", response_model=PointAccuracyResponse)
    def metrics_point_accuracy(request: PointAccuracyRequest) -> PointAccuracyResponse:
        try:
            box = NormBox(*request.box)
            points = PointSet(tuple(NormPoint(int(x), int(y)) for x, y in request.points))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return PointAccuracyResponse(accuracy=point_accuracy(points, box))

    @app.post("/v1/resample", response_model=ResampleResponse)
    def resample(request: ResampleRequest) -> ResampleResponse:
        shape = ImageShape(width=request.width, height=request.height)
        try:
            trace = resample_equidistant(
                [[float(x), float(y)] for x, y in request.points], shape, request.count
            )
        except (DegenerateTraceError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return ResampleResponse(points=[[p.x, p.y] for p in trace.points])

    @app.post("/v1/lift", response_model=LiftResponse)
    def lift(request: LiftRequest) -> LiftResponse:
        shape = ImageShape(width=request.width, height=request.height)
        try:
            cam = CameraModel(**request.intrinsics.model_dump())
            trace = Trace2D(tuple(NormPoint(int(x), int(y)) for x, y in request.trace))
            result = optimize_depths(trace, list(request.depths), cam, shape)
            depths = result.depths if request.optimize else list(request.depths)
            trace3d = lift_naive(trace, depths, cam, shape)
        except MissingDepthError as exc:
            raise HTTPException(status_code=400, detail={"message": str(exc), "index": exc.index})
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        final = result.final_objective if request.optimize else result.initial_objective
        return LiftResponse(
            points=[[p.x, p.y, p.z] for p in trace3d.points],
            initial_objective=result.initial_objective,
            final_objective=final,
        )

    return app


app = create_app()
