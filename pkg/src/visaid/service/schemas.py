"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ParseRequest(BaseModel):
    text: str


class ParseResponse(BaseModel):
    document: dict


class TraceMetricsRequest(BaseModel):
    pred: list[list[float]] = Field(min_length=2)
    gt: list[list[float]] = Field(min_length=2)


class TraceMetricsResponse(BaseModel):
    mae: float
    rmse: float


class PointAccuracyRequest(BaseModel):
    points: list[list[int]] = Field(min_length=1)
    box: list[int] = Field(min_length=4, max_length=4)


class PointAccuracyResponse(BaseModel):
    accuracy: float


class ResampleRequest(BaseModel):
    points: list[list[float]] = Field(min_length=2, description="pixel-space track")
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    count: int = Field(default=8, ge=2)


class ResampleResponse(BaseModel):
    points: list[list[int]]


class Intrinsics(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float


class LiftRequest(BaseModel):
    trace: list[list[int]] = Field(min_length=2, description="normalized trace")
    depths: list[float] = Field(min_length=2, description="raw depth per point")
    intrinsics: Intrinsics
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    optimize: bool = True


class LiftResponse(BaseModel):
    points: list[list[float]]
    initial_objective: float
    final_objective: float


class HealthResponse(BaseModel):
    status: str
    version: str
