"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateEnvRequest(BaseModel):
    env: str = Field(description="tabular | streaming | linear")
    seed: int
    num_states: int | None = None
    d: int | None = None


class GenerateEnvResponse(BaseModel):
    document: str  # serialized environment, ready to be saved as JSON
    env: str
    seed: int
    H: int
    num_states: int
    num_actions: int
    d: int
    b: float
    slack: float
    s1: int


class ExperimentRequest(BaseModel):
    env: str
    algo: str
    episodes: int
    seeds: list[int]
    env_params: dict = Field(default_factory=dict)
    hypers: dict = Field(default_factory=dict)
    eval_stride: int = 1
    record_timing: bool = True
    lp_method: str = "highs"


class SeedOutcome(BaseModel):
    seed: int
    ok: bool
    file: str
    error: str | None = None


class ExperimentStatus(BaseModel):
    job_id: str
    status: str  # queued | running | done | failed
    detail: str | None = None
    results: list[SeedOutcome] | None = None


class JobCreated(BaseModel):
    job_id: str


class FileContent(BaseModel):
    name: str
    content: str


class FileList(BaseModel):
    files: list[str]


class SummarizeRequest(BaseModel):
    files: list[FileContent]


class SummarizeResponse(BaseModel):
    content: str
