"""Pydantic request/response models for the HTTP surface."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str
    schema_version: int


class PresetResponse(BaseModel):
    name: str
    params: dict


class AnalyzeRequest(BaseModel):
    logs_dir: str = Field(description="Directory of episode record .jsonl files")
    out_dir: str = Field(description="Directory for report artifacts")
    dilemma: bool = False
    consistency_bins: int = 10
    mediation_resamples: int = 10_000
    seed: int = 0


class AnalyzeResponse(BaseModel):
    episodes: int
    comparisons: list[dict]
    regressions: list[dict]
    mediations: list[dict]
    dilemma: dict | None = None
    paths: dict[str, str]


class ReplayRequest(BaseModel):
    record_path: str


class ReplayResponse(BaseModel):
    ok: bool
    steps: int
    final_digest: str


class SessionStatus(BaseModel):
    session_id: str
    phase: str
    phase_index: int
    condition_order: str
    participants: list[str | None]
    connected: list[bool]
    records: int


class SessionsResponse(BaseModel):
    sessions: list[SessionStatus]


class ErrorResponse(BaseModel):
    detail: str
