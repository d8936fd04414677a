"""Request/response schemas of the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RunRequest(BaseModel):
    """Submit one run config or a named preset for execution."""

    model_config = ConfigDict(extra="forbid")

    config: Optional[dict] = None
    preset: Optional[str] = None
    output_dir: Optional[str] = None
    threads: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _exactly_one_target(self):
        if (self.config is None) == (self.preset is None):
            raise ValueError("provide exactly one of 'config' or 'preset'")
        return self


class JobInfo(BaseModel):
    id: str
    kind: Literal["run", "preset"]
    name: str
    state: Literal["pending", "running", "done", "failed"]
    passed: Optional[bool] = None
    error: Optional[str] = None
    output_dir: Optional[str] = None
    created_at: float
    finished_at: Optional[float] = None


class JobDetail(JobInfo):
    """Job status plus the result summary once the job finished."""

    summary: Optional[dict] = None


class PresetInfo(BaseModel):
    name: str
    description: str
    n_runs: int
    labels: list[str]


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path_a: str
    path_b: str
    tol: float = Field(gt=0)


class CompareResponse(BaseModel):
    path_a: str
    path_b: str
    tolerance: float
    n_rows: int
    max_abs_error: dict
    problems: list[str]
    passed: bool
